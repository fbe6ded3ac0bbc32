//! Shortcut plan: which side features feed which decoder stages, and the
//! depth and resolution of every hop.

use serde::{Deserialize, Serialize};

use crate::arch::backbone::{stage_size, BackboneProfile};
use crate::arch::config::DecoderConfig;
use crate::nn::layers::scaled_depth;

/// Working resolution of decoder stage `j` (1..=5), i.e. that of `F_{5-j+1}`.
/// `j = 6` is the input resolution.
pub fn working_size(input: (usize, usize), j: usize) -> (usize, usize) {
    stage_size(input, 6 - j)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    /// Decoder stage the hop delivers to.
    pub stage: usize,
    pub in_depth: usize,
    pub out_depth: usize,
    pub size: (usize, usize),
}

impl Hop {
    /// Depth reduction `in / out` of this hop.
    pub fn ratio(&self) -> f64 {
        self.in_depth as f64 / self.out_depth as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutPath {
    /// Side feature index `i`.
    pub source: usize,
    /// First decoder stage fed, `5 - i + 2`.
    pub entry: usize,
    /// Depth of `F_i`, which is also the depth delivered to `entry`.
    pub depth: usize,
    pub entry_size: (usize, usize),
    /// One hop per stage after `entry`.
    pub hops: Vec<Hop>,
}

impl ShortcutPath {
    pub fn feeds(&self, j: usize) -> bool {
        (self.entry..=5).contains(&j)
    }

    /// `(depth, size)` of `F_{i->j}`.
    pub fn at(&self, j: usize) -> Option<(usize, (usize, usize))> {
        if j == self.entry {
            Some((self.depth, self.entry_size))
        } else {
            self.hops.iter().find(|h| h.stage == j).map(|h| (h.out_depth, h.size))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortcutPlan {
    pub input: (usize, usize),
    /// Paths ordered by descending source index.
    pub paths: Vec<ShortcutPath>,
}

impl ShortcutPlan {
    pub fn new(profile: &BackboneProfile, cfg: &DecoderConfig, input: (usize, usize)) -> Self {
        let d = |i: usize| profile.depth(i.max(1));
        let paths = (0..cfg.pcsp_count.min(4))
            .map(|k| {
                let i = 5 - k;
                let entry = 7 - i;
                let depth = cfg.side_depth(profile, i);
                let mut prev = depth;
                let hops = (entry + 1..=5)
                    .map(|j| {
                        // telescoped: (d_i / r) * d_{5-j+1} / d_{i-1}
                        let out = scaled_depth(depth, d(6 - j), d(i - 1));
                        let hop = Hop {
                            stage: j,
                            in_depth: prev,
                            out_depth: out,
                            size: working_size(input, j),
                        };
                        prev = out;
                        hop
                    })
                    .collect();
                ShortcutPath {
                    source: i,
                    entry,
                    depth,
                    entry_size: working_size(input, entry),
                    hops,
                }
            })
            .collect();
        ShortcutPlan { input, paths }
    }

    pub fn path(&self, source: usize) -> Option<&ShortcutPath> {
        self.paths.iter().find(|p| p.source == source)
    }

    /// Depth of `F_{i->j}`, if planned.
    pub fn depth(&self, source: usize, j: usize) -> Option<usize> {
        self.path(source).and_then(|p| p.at(j)).map(|(d, _)| d)
    }

    /// Sources feeding stage `j`, ascending.
    pub fn sources_for(&self, j: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.paths.iter().filter(|p| p.feeds(j)).map(|p| p.source).collect();
        s.sort_unstable();
        s
    }
}
