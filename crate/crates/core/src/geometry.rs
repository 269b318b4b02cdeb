//! Geometry of the projection area around a block.
//!
//! The projection area is an `M x N` window with the block `B` at its
//! centre. Already decoded neighbour macroblocks (left, top-left, top and
//! top-right) form the reconstructed area `R`, and an L-shaped bar inside
//! `R` that borders `B` on the left and above is the decision area `D`.
//! Everything else is padding.
//!
//! Weights follow an isotropic decay from the window centre on `R`, a
//! constant `mu` on `B` and zero on padding.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::video_io::Plane;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    /// Projection area as `(rows, cols)`, i.e. `(M, N)`.
    pub projection: (usize, usize),
    pub block_size: usize,
    /// Decay base of the isotropic weight model on `R`.
    pub rho_hat: f64,
    /// Weight of the motion-compensated block.
    pub mu: f64,
    /// Width of the decision bar in pixels.
    pub decision_bar: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            projection: (64, 64),
            block_size: 16,
            rho_hat: 0.8,
            mu: 0.5,
            decision_bar: 4,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.projection;
        let b = self.block_size;
        if b == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        for (name, v) in [("M", m), ("N", n)] {
            if !v.is_power_of_two() || v < 2 * b {
                return Err(Error::Config(format!(
                    "projection {name}={v} must be a power of two >= 2*block_size"
                )));
            }
        }
        // the top row of neighbours and the top-right one must fit
        let (r0, c0) = ((m - b) / 2, (n - b) / 2);
        if r0 < b || c0 < b || c0 + 2 * b > n {
            return Err(Error::Config(format!(
                "{m}x{n} projection area cannot hold a {b}px block with its neighbours"
            )));
        }
        if !(self.rho_hat > 0.0 && self.rho_hat <= 1.0) {
            return Err(Error::Config(format!("rho_hat {} not in (0, 1]", self.rho_hat)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu {} must be >= 0", self.mu)));
        }
        if self.decision_bar > b {
            return Err(Error::Config(format!(
                "decision bar {} wider than the block",
                self.decision_bar
            )));
        }
        Ok(())
    }
}

/// Which of the four causal neighbour macroblocks are decoded and usable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Availability {
    pub left: bool,
    pub top_left: bool,
    pub top: bool,
    pub top_right: bool,
}

impl Availability {
    pub const ALL: Self = Self {
        left: true,
        top_left: true,
        top: true,
        top_right: true,
    };
    pub const NONE: Self = Self {
        left: false,
        top_left: false,
        top: false,
        top_right: false,
    };

    /// Availability under line-scan order for block `(row, col)` of a
    /// `rows x cols` block grid.
    pub fn for_block(row: usize, col: usize, cols: usize) -> Self {
        Self {
            left: col > 0,
            top_left: row > 0 && col > 0,
            top: row > 0,
            top_right: row > 0 && col + 1 < cols,
        }
    }

    /// Dense index in `0..16`, used for layout caches.
    pub fn index(self) -> usize {
        self.left as usize
            | (self.top_left as usize) << 1
            | (self.top as usize) << 2
            | (self.top_right as usize) << 3
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            left: i & 1 != 0,
            top_left: i & 2 != 0,
            top: i & 4 != 0,
            top_right: i & 8 != 0,
        }
    }

    pub fn any(self) -> bool {
        self.left || self.top_left || self.top || self.top_right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Padding,
    /// Reconstructed neighbourhood `R`, outside the decision bar.
    Neighbor,
    /// Reconstructed neighbourhood pixel that also belongs to `D`.
    Decision,
    Block,
}

impl Region {
    #[inline]
    pub fn is_reconstructed(self) -> bool {
        matches!(self, Region::Neighbor | Region::Decision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub padding: usize,
    /// `|R|`, decision pixels included.
    pub reconstructed: usize,
    pub decision: usize,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayout {
    config: LayoutConfig,
    availability: Availability,
    block_origin: (usize, usize),
    regions: Vec<Region>,
    weights: Grid,
    decision: Vec<(usize, usize)>,
}

/// Weight of a reconstructed pixel at Euclidean distance `d` from the
/// window centre.
#[inline]
pub fn isotropic_weight(rho_hat: f64, d: f64) -> f64 {
    rho_hat.powf(d)
}

/// Builds the region map and weight map for one availability pattern.
pub fn build_layout(config: LayoutConfig, availability: Availability) -> Result<ProjectionLayout> {
    config.validate()?;
    let (rows, cols) = config.projection;
    let b = config.block_size;
    let (r0, c0) = ((rows - b) / 2, (cols - b) / 2);

    let mut regions = vec![Region::Padding; rows * cols];
    let mut paint = |top: usize, left: usize, region: Region| {
        for m in top..top + b {
            for n in left..left + b {
                regions[m * cols + n] = region;
            }
        }
    };
    paint(r0, c0, Region::Block);
    if availability.left {
        paint(r0, c0 - b, Region::Neighbor);
    }
    if availability.top_left {
        paint(r0 - b, c0 - b, Region::Neighbor);
    }
    if availability.top {
        paint(r0 - b, c0, Region::Neighbor);
    }
    if availability.top_right {
        paint(r0 - b, c0 + b, Region::Neighbor);
    }

    // L-shaped bar: `bar` rows above B (corner included) and `bar` columns
    // to its left, restricted to what R actually covers
    let bar = config.decision_bar;
    let mut decision = Vec::new();
    for m in r0 - bar..r0 + b {
        for n in c0 - bar..c0 + b {
            let in_bar = m < r0 || n < c0;
            let idx = m * cols + n;
            if in_bar && regions[idx] == Region::Neighbor {
                regions[idx] = Region::Decision;
                decision.push((m, n));
            }
        }
    }

    let cm = (rows as f64 - 1.0) / 2.0;
    let cn = (cols as f64 - 1.0) / 2.0;
    let weights = Grid::from_fn(rows, cols, |m, n| match regions[m * cols + n] {
        Region::Padding => 0.0,
        Region::Block => config.mu,
        Region::Neighbor | Region::Decision => {
            let d = ((m as f64 - cm).powi(2) + (n as f64 - cn).powi(2)).sqrt();
            isotropic_weight(config.rho_hat, d)
        }
    });

    Ok(ProjectionLayout {
        config,
        availability,
        block_origin: (r0, c0),
        regions,
        weights,
        decision,
    })
}

impl ProjectionLayout {
    pub fn config(&self) -> &LayoutConfig {
        &self.config
    }

    pub fn availability(&self) -> Availability {
        self.availability
    }

    /// `(M, N)`
    pub fn shape(&self) -> (usize, usize) {
        self.config.projection
    }

    pub fn block_size(&self) -> usize {
        self.config.block_size
    }

    /// `(row, col)` of the block's top-left pixel inside the projection area.
    pub fn block_origin(&self) -> (usize, usize) {
        self.block_origin
    }

    #[inline]
    pub fn region(&self, m: usize, n: usize) -> Region {
        self.regions[m * self.config.projection.1 + n]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }

    /// Decision-area pixels in row-major order.
    pub fn decision_pixels(&self) -> &[(usize, usize)] {
        &self.decision
    }

    pub fn has_reconstructed(&self) -> bool {
        self.regions.iter().any(|r| r.is_reconstructed())
    }

    pub fn weight_at(&self, m: usize, n: usize) -> Result<f64> {
        let (rows, cols) = self.shape();
        if m >= rows || n >= cols {
            return Err(Error::OutOfRange(m, n));
        }
        Ok(self.weights.get(m, n))
    }

    pub fn counts(&self) -> RegionCounts {
        let mut c = RegionCounts {
            padding: 0,
            reconstructed: 0,
            decision: 0,
            block: 0,
        };
        for r in &self.regions {
            match r {
                Region::Padding => c.padding += 1,
                Region::Neighbor => c.reconstructed += 1,
                Region::Decision => {
                    c.reconstructed += 1;
                    c.decision += 1;
                }
                Region::Block => c.block += 1,
            }
        }
        c
    }

    /// Weight map scaled by 255 for visual inspection.
    pub fn weight_map_plane(&self) -> Plane {
        self.weights.to_plane(255.0)
    }

    /// Region map with fixed grey levels: padding 0, R 96, D 160, B 255.
    pub fn region_map_plane(&self) -> Plane {
        let (rows, cols) = self.shape();
        Plane::from_fn(cols, rows, |x, y| match self.region(y, x) {
            Region::Padding => 0,
            Region::Neighbor => 96,
            Region::Decision => 160,
            Region::Block => 255,
        })
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "availability": self.availability,
            "block_origin": self.block_origin,
            "counts": self.counts(),
        })
    }
}

/// All sixteen availability layouts for one configuration, indexed by
/// [`Availability::index`].
#[derive(Debug, Clone)]
pub struct LayoutSet {
    layouts: Vec<ProjectionLayout>,
}

impl LayoutSet {
    pub fn new(config: LayoutConfig) -> Result<Self> {
        let layouts = (0..16)
            .map(|i| build_layout(config, Availability::from_index(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layouts })
    }

    pub fn get(&self, availability: Availability) -> &ProjectionLayout {
        &self.layouts[availability.index()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_neighbourhood_counts() {
        let layout = build_layout(LayoutConfig::default(), Availability::ALL).unwrap();
        let c = layout.counts();
        assert_eq!(c.block, 256);
        assert_eq!(c.reconstructed, 1024);
        assert_eq!(c.padding, 4096 - 1280);
        // 4 rows x 20 cols above plus 16 rows x 4 cols on the left
        assert_eq!(c.decision, 80 + 64);
        assert_eq!(layout.block_origin(), (24, 24));
    }

    #[test]
    fn block_weight_and_r_decay() {
        let config = LayoutConfig {
            mu: 0.25,
            ..LayoutConfig::default()
        };
        let layout = build_layout(config, Availability::ALL).unwrap();
        let (rows, cols) = layout.shape();
        let mut r_pixels = Vec::new();
        for m in 0..rows {
            for n in 0..cols {
                match layout.region(m, n) {
                    Region::Block => assert_eq!(layout.weight_at(m, n).unwrap(), 0.25),
                    Region::Padding => assert_eq!(layout.weight_at(m, n).unwrap(), 0.0),
                    _ => r_pixels.push((m, n)),
                }
            }
        }
        // nearest R pixel to the centre (31.5, 31.5) sits at distance
        // sqrt(8.5^2 + 0.5^2); every R weight is at most rho_hat^that
        let d_min = (8.5f64 * 8.5 + 0.25).sqrt();
        let bound = 0.8f64.powf(d_min);
        let cm = 31.5;
        let dist = |(m, n): (usize, usize)| ((m as f64 - cm).powi(2) + (n as f64 - cm).powi(2)).sqrt();
        for &p in &r_pixels {
            let w = layout.weight_at(p.0, p.1).unwrap();
            assert!(w <= bound + 1e-15 && w > 0.0);
        }
        r_pixels.sort_by(|a, b| dist(*a).partial_cmp(&dist(*b)).unwrap());
        for pair in r_pixels.windows(2) {
            let (wa, wb) = (layout.weights().get(pair[0].0, pair[0].1), layout.weights().get(pair[1].0, pair[1].1));
            if dist(pair[1]) > dist(pair[0]) {
                assert!(wb < wa);
            } else {
                assert_eq!(wa, wb);
            }
        }
    }

    #[test]
    fn no_neighbours() {
        let layout = build_layout(LayoutConfig::default(), Availability::NONE).unwrap();
        let c = layout.counts();
        assert_eq!((c.reconstructed, c.decision, c.block), (0, 0, 256));
        assert!(layout.decision_pixels().is_empty());
        assert!(!layout.has_reconstructed());
        let nonzero = layout.weights().data().iter().filter(|&&w| w != 0.0).count();
        assert_eq!(nonzero, 256);
    }

    #[test]
    fn weight_at_distance_ten() {
        // 0.8^10 = 1073741824 / 10^10
        assert!((isotropic_weight(0.8, 10.0) - 0.107_374_182_4).abs() < 1e-12);
        let layout = build_layout(LayoutConfig::default(), Availability::ALL).unwrap();
        // left neighbour pixel (24, 16): offsets (-7.5, -15.5) from the centre
        let d = (7.5f64 * 7.5 + 15.5 * 15.5).sqrt();
        let got = layout.weight_at(24, 16).unwrap();
        assert!((got - (d * 0.8f64.ln()).exp()).abs() < 1e-15);
        assert!(layout.weight_at(64, 0).is_err());
        assert!(layout.weight_at(0, 64).is_err());
    }

    #[test]
    fn partial_availability_shrinks_r_and_d() {
        let only_left = Availability {
            left: true,
            ..Availability::NONE
        };
        let layout = build_layout(LayoutConfig::default(), only_left).unwrap();
        let c = layout.counts();
        assert_eq!(c.reconstructed, 256);
        assert_eq!(c.decision, 64);
        let last_column = Availability {
            top_right: false,
            ..Availability::ALL
        };
        let c = build_layout(LayoutConfig::default(), last_column).unwrap().counts();
        assert_eq!(c.reconstructed, 768);
        assert_eq!(c.decision, 144);
    }

    #[test]
    fn invalid_configs() {
        let base = LayoutConfig::default();
        for bad in [
            LayoutConfig { projection: (48, 64), ..base },
            LayoutConfig { projection: (32, 32), ..base },
            LayoutConfig { rho_hat: 0.0, ..base },
            LayoutConfig { rho_hat: 1.5, ..base },
            LayoutConfig { mu: -0.1, ..base },
            LayoutConfig { decision_bar: 17, ..base },
            LayoutConfig { block_size: 0, ..base },
        ] {
            assert!(build_layout(bad, Availability::ALL).is_err(), "{bad:?}");
        }
        let small = LayoutConfig {
            projection: (32, 32),
            block_size: 8,
            ..base
        };
        assert_eq!(build_layout(small, Availability::ALL).unwrap().block_origin(), (12, 12));
    }

    proptest! {
        #[test]
        fn partition_and_d_subset(idx in 0usize..16, bar in 0usize..=16, mu in 0.0f64..2.0) {
            let config = LayoutConfig { decision_bar: bar, mu, ..LayoutConfig::default() };
            let layout = build_layout(config, Availability::from_index(idx)).unwrap();
            let c = layout.counts();
            prop_assert_eq!(c.padding + c.reconstructed + c.block, 64 * 64);
            for &(m, n) in layout.decision_pixels() {
                prop_assert!(layout.region(m, n).is_reconstructed());
            }
            for (i, r) in layout.regions().iter().enumerate() {
                let w = layout.weights().data()[i];
                match r {
                    Region::Padding => prop_assert_eq!(w, 0.0),
                    Region::Block => prop_assert_eq!(w, mu),
                    _ => prop_assert!(w > 0.0 && w <= 1.0),
                }
            }
        }
    }
}
