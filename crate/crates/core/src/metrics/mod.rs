//! Discrepancy statistics between a noisy sample and its reconstruction.
//!
//! Pixel-level ([`mse`]), structural ([`ssim`]), texture and frequency
//! ([`lbp_histogram`], [`dwt_band_histograms`] compared with
//! [`kl_divergence`]), learned-feature ([`feature_distance`]),
//! representation stability ([`local_complexity`]) and, for tabular data,
//! rank-order consistency.

mod complexity;
mod image;
mod texture;
mod vector;

use serde::{Deserialize, Serialize};

pub use complexity::{local_complexity, local_complexity_net, sign_pattern};
pub use image::{ssim, Image};
pub use texture::{
    dwt_band_histograms, haar_dwt, kl_divergence, lbp_codes, lbp_histogram, HaarBands, Histogram,
};
pub use vector::{feature_distance, mse, rank_order_consistency};

use crate::{Error, Result};

/// Default additive smoothing per histogram bin before renormalizing.
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Tabular,
}

/// One coordinate of the per-level statistic vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Mse,
    Ssim,
    FeatureDistance,
    LocalComplexity,
    LbpKl,
    DwtKlLh,
    DwtKlHl,
    DwtKlHh,
    RankOrder,
}

impl MetricKind {
    /// Canonical per-level order for images.
    pub const IMAGE: [MetricKind; 8] = [
        MetricKind::Mse,
        MetricKind::Ssim,
        MetricKind::FeatureDistance,
        MetricKind::LocalComplexity,
        MetricKind::LbpKl,
        MetricKind::DwtKlLh,
        MetricKind::DwtKlHl,
        MetricKind::DwtKlHh,
    ];

    /// Canonical per-level order for tabular data.
    pub const TABULAR: [MetricKind; 4] = [
        MetricKind::Mse,
        MetricKind::RankOrder,
        MetricKind::FeatureDistance,
        MetricKind::LocalComplexity,
    ];

    /// Short name used in embedding column headers.
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::Ssim => "ssim",
            MetricKind::FeatureDistance => "featdist",
            MetricKind::LocalComplexity => "lc",
            MetricKind::LbpKl => "lbpkl",
            MetricKind::DwtKlLh => "dwtkl_lh",
            MetricKind::DwtKlHl => "dwtkl_hl",
            MetricKind::DwtKlHh => "dwtkl_hh",
            MetricKind::RankOrder => "rankorder",
        }
    }

    pub fn valid_for(self, modality: Modality) -> bool {
        match modality {
            Modality::Image => MetricKind::IMAGE.contains(&self),
            Modality::Tabular => MetricKind::TABULAR.contains(&self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSuiteConfig {
    pub modality: Modality,
    /// Metrics evaluated per level, kept in canonical order by [`Self::layout`].
    pub enabled: Vec<MetricKind>,
    pub ssim_window: usize,
    pub lbp_bins: usize,
    pub dwt_bins: usize,
    pub dwt_clip: f64,
    pub lc_draws: usize,
    pub lc_radius: f64,
    pub tie_tol: f64,
    pub smoothing: f64,
}

impl MetricSuiteConfig {
    pub fn image() -> Self {
        MetricSuiteConfig {
            modality: Modality::Image,
            enabled: MetricKind::IMAGE.to_vec(),
            ssim_window: 7,
            lbp_bins: 256,
            dwt_bins: 16,
            dwt_clip: 1.0,
            lc_draws: 4,
            lc_radius: 0.05,
            tie_tol: 1e-9,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn tabular() -> Self {
        MetricSuiteConfig {
            modality: Modality::Tabular,
            enabled: MetricKind::TABULAR.to_vec(),
            ..Self::image()
        }
    }

    pub fn for_modality(modality: Modality) -> Self {
        match modality {
            Modality::Image => Self::image(),
            Modality::Tabular => Self::tabular(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled.is_empty() {
            return Err(Error::config("at least one metric must be enabled"));
        }
        if let Some(m) = self.enabled.iter().find(|m| !m.valid_for(self.modality)) {
            return Err(Error::config(format!(
                "metric {} is not defined for {:?} data",
                m.name(),
                self.modality
            )));
        }
        if self.ssim_window < 3 || self.ssim_window % 2 == 0 {
            return Err(Error::config("ssim_window must be odd and at least 3"));
        }
        if self.enabled.contains(&MetricKind::LocalComplexity)
            && (self.lc_draws < 2 || !(self.lc_radius > 0.0))
        {
            return Err(Error::config("local complexity needs lc_draws >= 2 and lc_radius > 0"));
        }
        if !(1..=256).contains(&self.lbp_bins) || 256 % self.lbp_bins != 0 {
            return Err(Error::config("lbp_bins must divide 256"));
        }
        if self.dwt_bins == 0 || !(self.dwt_clip > 0.0) {
            return Err(Error::config("dwt_bins must be positive and dwt_clip > 0"));
        }
        if !(self.smoothing > 0.0) || self.tie_tol < 0.0 {
            return Err(Error::config("smoothing must be positive and tie_tol non-negative"));
        }
        Ok(())
    }

    /// Enabled metrics in canonical order without duplicates.
    pub fn layout(&self) -> Vec<MetricKind> {
        let canonical: &[MetricKind] = match self.modality {
            Modality::Image => &MetricKind::IMAGE,
            Modality::Tabular => &MetricKind::TABULAR,
        };
        canonical
            .iter()
            .copied()
            .filter(|m| self.enabled.contains(m))
            .collect()
    }
}
