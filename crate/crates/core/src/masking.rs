//! Token layouts and masking strategies.
//!
//! A sample is tokenized as one token per input scalar, one per output scalar
//! and one per image patch, in that order. A [`TokenMask`] partitions the token
//! indices into the visible set (fed to the encoder) and the masked set
//! (replaced by mask tokens in the decoder).

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Token counts per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenLayout {
    pub n_input_tokens: usize,
    pub n_output_tokens: usize,
    pub n_patch_tokens: usize,
}

impl TokenLayout {
    pub const fn new(n_in: usize, n_out: usize, n_patch: usize) -> Self {
        Self {
            n_input_tokens: n_in,
            n_output_tokens: n_out,
            n_patch_tokens: n_patch,
        }
    }

    pub fn total(&self) -> usize {
        self.n_input_tokens + self.n_output_tokens + self.n_patch_tokens
    }

    /// Input plus output scalar tokens.
    pub fn n_scalar_tokens(&self) -> usize {
        self.n_input_tokens + self.n_output_tokens
    }

    pub fn inputs(&self) -> core::ops::Range<usize> {
        0..self.n_input_tokens
    }

    pub fn outputs(&self) -> core::ops::Range<usize> {
        self.n_input_tokens..self.n_scalar_tokens()
    }

    pub fn patches(&self) -> core::ops::Range<usize> {
        self.n_scalar_tokens()..self.total()
    }

    pub fn is_scalar(&self, token: usize) -> bool {
        token < self.n_scalar_tokens()
    }
}

/// A visible/masked partition of a layout's token indices, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMask {
    layout: TokenLayout,
    visible: Vec<usize>,
    masked: Vec<usize>,
}

/// The JSON shape of a mask in experiment logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

impl TokenMask {
    /// Builds a mask from the masked indices; everything else is visible.
    pub fn from_masked(layout: TokenLayout, masked: impl IntoIterator<Item = usize>) -> Result<Self> {
        let total = layout.total();
        let mut flags = alloc::vec![false; total];
        for m in masked {
            if m >= total {
                return Err(Error::TokenOutOfRange { index: m, len: total });
            }
            flags[m] = true;
        }
        let (masked, visible): (Vec<usize>, Vec<usize>) = (0..total).partition(|&i| flags[i]);
        Ok(Self {
            layout,
            visible,
            masked,
        })
    }

    /// Everything visible.
    pub fn all_visible(layout: TokenLayout) -> Self {
        Self {
            layout,
            visible: (0..layout.total()).collect(),
            masked: Vec::new(),
        }
    }

    pub fn layout(&self) -> TokenLayout {
        self.layout
    }

    pub fn visible(&self) -> &[usize] {
        &self.visible
    }

    pub fn masked(&self) -> &[usize] {
        &self.masked
    }

    pub fn is_masked(&self, token: usize) -> bool {
        self.masked.binary_search(&token).is_ok()
    }

    pub fn to_record(&self) -> MaskRecord {
        MaskRecord {
            visible: self.visible.clone(),
            masked: self.masked.clone(),
        }
    }

    /// Rebuilds a mask from its record, checking that it partitions `layout`.
    pub fn from_record(layout: TokenLayout, record: &MaskRecord) -> Result<Self> {
        let mask = Self::from_masked(layout, record.masked.iter().copied())?;
        if mask.visible != record.visible || mask.masked.len() != record.masked.len() {
            return Err(Error::InvalidArgument(
                "mask record is not a partition of the layout".to_string(),
            ));
        }
        Ok(mask)
    }
}

/// Surrogate-prediction mask: inputs visible, every output scalar and patch masked.
pub fn forward_mask(layout: TokenLayout) -> TokenMask {
    TokenMask {
        layout,
        visible: layout.inputs().collect(),
        masked: (layout.n_input_tokens..layout.total()).collect(),
    }
}

/// Number of tokens a random mask hides: `floor(rate * total)`.
pub fn masked_count(total: usize, rate: f64) -> usize {
    libm::floor(rate * total as f64) as usize
}

/// Masks `floor(rate * total)` tokens drawn uniformly without replacement.
pub fn random_mask(layout: TokenLayout, rate: f64, seed_value: u64) -> Result<TokenMask> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument("mask rate must lie in [0, 1]".into()));
    }
    let total = layout.total();
    let count = masked_count(total, rate).min(total);
    let mut rng = seed::rng(seed_value);
    let picked = rand::seq::index::sample(&mut rng, total, count);
    TokenMask::from_masked(layout, picked)
}

/// Swaps the visible and masked sets.
pub fn complement(mask: &TokenMask) -> TokenMask {
    TokenMask {
        layout: mask.layout,
        visible: mask.masked.clone(),
        masked: mask.visible.clone(),
    }
}

/// A named way of producing masks.
pub trait MaskStrategy: Send + Sync {
    fn mask(&self, layout: TokenLayout, seed: u64) -> Result<TokenMask>;
}

/// [`forward_mask`] as a strategy.
pub struct ForwardStrategy;

impl MaskStrategy for ForwardStrategy {
    fn mask(&self, layout: TokenLayout, _seed: u64) -> Result<TokenMask> {
        Ok(forward_mask(layout))
    }
}

/// [`random_mask`] at a fixed rate.
pub struct RandomStrategy {
    pub rate: f64,
}

impl MaskStrategy for RandomStrategy {
    fn mask(&self, layout: TokenLayout, seed: u64) -> Result<TokenMask> {
        random_mask(layout, self.rate, seed)
    }
}

/// Registry of masking strategies by name.
pub struct StrategyTable {
    strategies: BTreeMap<String, Box<dyn MaskStrategy>>,
}

impl StrategyTable {
    pub fn empty() -> Self {
        Self {
            strategies: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, strategy: Box<dyn MaskStrategy>) {
        self.strategies.insert(name.to_string(), strategy);
    }

    pub fn get(&self, name: &str) -> Option<&dyn MaskStrategy> {
        self.strategies.get(name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.strategies.keys().map(String::as_str)
    }
}

impl Default for StrategyTable {
    /// `forward` and `random` (rate 0.75).
    fn default() -> Self {
        let mut t = Self::empty();
        t.register("forward", Box::new(ForwardStrategy));
        t.register("random", Box::new(RandomStrategy { rate: 0.75 }));
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn assert_partition(m: &TokenMask) {
        let total = m.layout().total();
        let mut seen = vec![0u8; total];
        for &i in m.visible().iter().chain(m.masked()) {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(m.visible().windows(2).all(|w| w[0] < w[1]));
        assert!(m.masked().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn forward_mask_examples() {
        let m = forward_mask(TokenLayout::new(9, 10, 16));
        assert_eq!(m.visible(), (0..9).collect::<Vec<_>>().as_slice());
        assert_eq!(m.masked(), (9..35).collect::<Vec<_>>().as_slice());
        let m = forward_mask(TokenLayout::new(9, 10, 0));
        assert_eq!(m.masked(), (9..19).collect::<Vec<_>>().as_slice());
        let m = forward_mask(TokenLayout::new(1, 1, 1));
        assert_eq!(m.visible(), &[0]);
        assert_eq!(m.masked(), &[1, 2]);
    }

    #[test]
    fn random_mask_examples() {
        let layout = TokenLayout::new(9, 10, 16);
        let m = random_mask(layout, 0.75, 3).unwrap();
        assert_eq!(m.masked().len(), 26);
        assert_eq!(m.visible().len(), 9);
        let m = random_mask(layout, 0.0, 5).unwrap();
        assert!(m.masked().is_empty());
        assert_eq!(m.visible().len(), 35);
        assert_eq!(random_mask(layout, 0.75, 9).unwrap(), random_mask(layout, 0.75, 9).unwrap());
        assert!(random_mask(layout, 1.5, 0).is_err());
    }

    #[test]
    fn complement_examples() {
        let layout = TokenLayout::new(9, 10, 16);
        let c = complement(&forward_mask(layout));
        assert_eq!(c.visible(), (9..35).collect::<Vec<_>>().as_slice());
        assert_eq!(c.masked(), (0..9).collect::<Vec<_>>().as_slice());
        let all = TokenMask::all_visible(layout);
        assert_eq!(complement(&all).masked().len(), 35);
        assert!(complement(&all).visible().is_empty());
    }

    #[test]
    fn record_round_trip_and_rejection() {
        let layout = TokenLayout::new(2, 2, 4);
        let m = random_mask(layout, 0.5, 1).unwrap();
        assert_eq!(TokenMask::from_record(layout, &m.to_record()).unwrap(), m);
        let bad = MaskRecord {
            visible: vec![0, 1],
            masked: vec![1, 2, 3, 4, 5, 6, 7],
        };
        assert!(TokenMask::from_record(layout, &bad).is_err());
    }

    #[test]
    fn strategy_table_defaults() {
        let t = StrategyTable::default();
        assert_eq!(t.names().collect::<Vec<_>>(), vec!["forward", "random"]);
        let layout = TokenLayout::new(9, 10, 16);
        assert_eq!(t.get("random").unwrap().mask(layout, 4).unwrap().masked().len(), 26);
        assert_eq!(t.get("forward").unwrap().mask(layout, 4).unwrap(), forward_mask(layout));
    }

    proptest! {
        #[test]
        fn random_masks_partition(n_in in 0usize..70, n_out in 0usize..70, n_patch in 0usize..61,
                                  rate in prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]),
                                  seed in any::<u64>()) {
            let layout = TokenLayout::new(n_in, n_out, n_patch);
            prop_assume!(layout.total() >= 1);
            let m = random_mask(layout, rate, seed).unwrap();
            assert_partition(&m);
            prop_assert_eq!(m.masked().len(), masked_count(layout.total(), rate));
            prop_assert_eq!(complement(&complement(&m)), m);
        }
    }
}
