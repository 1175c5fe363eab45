//! Flat `key = value` loop configuration. Every key has a default; unknown
//! or repeated keys and out-of-range values are rejected.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Intrinsics;
use crate::planner::PlannerParams;
use crate::quality::{QualityWeights, RasterParams};
use crate::simulator::{CaptureParams, PresetKind, SceneParams};
use crate::surface::EnergyParams;

/// How the percentile anchors of the quality fusion are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMode {
    /// Computed once, from the first assessed batch, then reused so scores
    /// are comparable across iterations.
    Fixed,
    /// Recomputed from every batch's own records.
    PerBatch,
}

/// Values that can appear on the right of `=`.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
from_str_value!(usize, u32, u64, bool);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s
            .parse()
            .map_err(|e: std::num::ParseFloatError| e.to_string())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("value must be finite".into())
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

/// `auto` or a number.
impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or("auto".into(), |v| v.render())
    }
}

/// Comma-separated numbers.
impl ConfigValue for Vec<f64> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',').map(|x| f64::parse_value(x.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter()
            .map(|v| v.render())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl ConfigValue for PresetKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn render(&self) -> String {
        match self {
            PresetKind::Nadir => "nadir".into(),
            PresetKind::Circle => "circle".into(),
        }
    }
}

impl ConfigValue for AnchorMode {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed" => Ok(AnchorMode::Fixed),
            "per-batch" => Ok(AnchorMode::PerBatch),
            _ => Err(format!("expected fixed or per-batch, got '{s}'")),
        }
    }
    fn render(&self) -> String {
        match self {
            AnchorMode::Fixed => "fixed".into(),
            AnchorMode::PerBatch => "per-batch".into(),
        }
    }
}

macro_rules! loop_config {
    ($($(#[doc = $doc:expr])* $name:ident : $t:ty = $default:expr, $valid:expr;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct LoopConfig {
            $($(#[doc = $doc])* pub $name: $t,)*
        }

        impl Default for LoopConfig {
            fn default() -> Self {
                LoopConfig { $($name: $default,)* }
            }
        }

        impl LoopConfig {
            /// Every key in declaration order.
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name),)*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        let v = <$t as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                        let check: fn(&$t) -> bool = $valid;
                        if !check(&v) {
                            return Err(Error::Config(format!("{key}: value '{value}' out of range")));
                        }
                        self.$name = v;
                        Ok(())
                    })*
                    _ => Err(Error::Config(format!("unknown key '{key}'"))),
                }
            }

            /// `(key, rendered value)` for every key.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($name), ConfigValue::render(&self.$name)),)*]
            }
        }
    };
}

fn positive(v: &f64) -> bool {
    *v > 0.0
}

fn non_negative(v: &f64) -> bool {
    *v >= 0.0
}

fn unit(v: &f64) -> bool {
    (0.0..=1.0).contains(v)
}

loop_config! {
    /// Images per batch.
    batch_size: usize = 10, |v| (5..=20).contains(v);
    /// Explore-exploit iteration cap.
    iterations: usize = 3, |v| *v >= 1;
    initial_flight: PresetKind = PresetKind::Nadir, |_| true;

    scene_extent: f64 = 80.0, positive;
    scene_buildings: usize = 8, |v| *v <= 64;
    ground_cell: f64 = 2.0, positive;
    ground_amplitude: f64 = 0.6, non_negative;
    /// Ground-truth samples per m².
    truth_density: f64 = 100.0, positive;

    focal: f64 = 500.0, positive;
    image_width: u32 = 640, |v| *v > 0;
    image_height: u32 = 480, |v| *v > 0;
    sigma_px: f64 = 1.0, non_negative;
    sigma_3d: f64 = 0.0, non_negative;
    /// Landmarks per m² of exposed surface.
    feature_density: f64 = 0.5, positive;
    capture_depth_tolerance: f64 = 0.01, non_negative;
    capture_resolution_scale: f64 = 1.0, |v| *v > 0.0 && *v <= 1.0;
    capture_seed: u64 = 0, |_| true;

    /// Duplicate-point radius as a fraction of the first batch's extent.
    dup_tolerance: f64 = 1e-7, non_negative;
    alpha_free: f64 = 1000.0, non_negative;
    alpha_occ: f64 = 1000.0, non_negative;
    alpha_con: f64 = 100.0, non_negative;
    lambda: f64 = 1.0, non_negative;
    outlier_k: f64 = 2.0, non_negative;
    outlier_iterations: usize = 5, |_| true;

    raster_scale: f64 = 0.25, |v| *v > 0.0 && *v <= 1.0;
    /// Visibility depth tolerance as a fraction of the scene diagonal.
    raster_depth_tolerance: f64 = 1e-3, non_negative;
    w_gsd: f64 = 0.1, unit;
    w_redundancy: f64 = 0.8, unit;
    w_reproj: f64 = 0.1, unit;
    anchors: AnchorMode = AnchorMode::Fixed, |_| true;

    /// Fixed low-quality threshold, or `auto` for the percentile rule.
    tau_quality: Option<f64> = None, |v| v.is_none_or(|t| (0.0..=1.0).contains(&t));
    tau_percentile: f64 = 25.0, |v| (0.0..=100.0).contains(v);
    eps_spatial: f64 = 0.008, positive;
    n_min_floor: usize = 5, |v| *v >= 1;
    n_min_fraction: f64 = 0.001, non_negative;
    ransac_iterations: usize = 100, |v| *v >= 1;
    ransac_eps: f64 = 0.01, positive;
    ransac_min_inlier_ratio: f64 = 0.1, unit;
    obb_alpha: f64 = 0.8, positive;
    obb_inflate: f64 = 1e-6, non_negative;
    max_rays_per_cluster: usize = 200, |v| *v >= 1;
    scales: Vec<f64> = vec![0.5, 0.75, 1.0], |v| !v.is_empty() && v.iter().all(|s| *s > 0.0 && *s <= 1.0);
    d_min: f64 = 0.02, non_negative;
    target_cap: usize = 50, |v| *v >= 1;
    altitude_weight: f64 = 0.3, non_negative;
    max_2opt_passes: usize = 1000, |_| true;
    planner_seed: u64 = 7, |_| true;

    /// F-score threshold as a fraction of the scene diagonal.
    eval_threshold: f64 = 0.01, positive;
    /// Mesh samples per m² for evaluation.
    eval_density: f64 = 10.0, positive;
    eval_seed: u64 = 0, |_| true;
}

impl LoopConfig {
    pub fn parse(text: &str) -> Result<LoopConfig> {
        let mut cfg = LoopConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: key '{k}' repeated", n + 1)));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<LoopConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        LoopConfig::parse(&text)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        }
        s
    }

    pub fn scene_params(&self) -> SceneParams {
        SceneParams {
            extent: self.scene_extent,
            buildings: self.scene_buildings,
            ground_cell: self.ground_cell,
            ground_amplitude: self.ground_amplitude,
            truth_density: self.truth_density,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::centered(self.focal, self.image_width, self.image_height)
    }

    pub fn capture_params(&self) -> CaptureParams {
        CaptureParams {
            intrinsics: self.intrinsics(),
            sigma_px: self.sigma_px,
            sigma_3d: self.sigma_3d,
            feature_density: self.feature_density,
            depth_tolerance: self.capture_depth_tolerance,
            resolution_scale: self.capture_resolution_scale,
            seed: self.capture_seed,
        }
    }

    pub fn energy_params(&self) -> EnergyParams {
        EnergyParams {
            alpha_free: self.alpha_free,
            alpha_occ: self.alpha_occ,
            alpha_con: self.alpha_con,
            lambda: self.lambda,
        }
    }

    pub fn raster_params(&self, diagonal: f64) -> RasterParams {
        RasterParams {
            resolution_scale: self.raster_scale,
            depth_tolerance: self.raster_depth_tolerance * diagonal,
        }
    }

    pub fn quality_weights(&self) -> QualityWeights {
        QualityWeights {
            gsd: self.w_gsd,
            redundancy: self.w_redundancy,
            reproj: self.w_reproj,
        }
    }

    pub fn planner_params(&self) -> PlannerParams {
        PlannerParams {
            tau_quality: self.tau_quality,
            tau_percentile: self.tau_percentile,
            eps_spatial: self.eps_spatial,
            n_min_floor: self.n_min_floor,
            n_min_fraction: self.n_min_fraction,
            ransac_iterations: self.ransac_iterations,
            ransac_eps: self.ransac_eps,
            ransac_min_inlier_ratio: self.ransac_min_inlier_ratio,
            obb_alpha: self.obb_alpha,
            obb_inflate: self.obb_inflate,
            max_rays_per_cluster: self.max_rays_per_cluster,
            scales: self.scales.clone(),
            d_min: self.d_min,
            target_cap: self.target_cap,
            altitude_weight: self.altitude_weight,
            max_2opt_passes: self.max_2opt_passes,
            seed: self.planner_seed,
        }
    }
}
