//! Seeded synthetic clouds built from horizontal slabs and patches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::las_io::{LidarPoint, PointCloud};

/// Where a class's points are placed in the horizontal plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Spread over the whole extent, avoiding the discs of patch classes.
    Background,
    /// Inside `count` discs of the given radius at random centers.
    Patches { count: usize, radius: f64 },
    /// Spread over the whole extent, ignoring every other class.
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub code: u8,
    pub count: usize,
    pub layout: Layout,
    pub z_mean: f64,
    pub z_sigma: f64,
    pub intensity_mean: f64,
    pub intensity_sigma: f64,
    /// Probability that a pulse produced several returns.
    #[serde(default)]
    pub multi_return: f64,
}

/// A synthetic scene: a square of side `extent` (meters) whose origin is
/// offset like projected map coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub extent: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    /// Per-point spread of scan angle around the flight-line geometry.
    #[serde(default = "default_scan_sigma")]
    pub scan_sigma: f64,
    /// `None` uses the experiment seed.
    #[serde(default)]
    pub seed: Option<u64>,
    pub classes: Vec<SynthClass>,
}

fn default_scan_sigma() -> f64 {
    2.0
}

impl SynthSpec {
    /// Four classes in z-layered slabs: ground, water patches sitting at
    /// ground level, elevated bridge decks, and scattered noise. Single-point
    /// attributes overlap between classes; a point's neighborhood does not.
    pub fn slabs(n: usize) -> Self {
        let water = n / 5;
        let deck = n / 5;
        let noise = n / 10;
        let ground = n - water - deck - noise;
        Self {
            extent: 100.0,
            origin: [500_000.0, 4_000_000.0],
            scan_sigma: default_scan_sigma(),
            seed: None,
            classes: vec![
                SynthClass {
                    code: 2,
                    count: ground,
                    layout: Layout::Background,
                    z_mean: 0.0,
                    z_sigma: 0.6,
                    intensity_mean: 100.0,
                    intensity_sigma: 30.0,
                    multi_return: 0.1,
                },
                SynthClass {
                    code: 9,
                    count: water,
                    layout: Layout::Patches { count: 6, radius: 7.0 },
                    z_mean: -0.3,
                    z_sigma: 0.6,
                    intensity_mean: 70.0,
                    intensity_sigma: 30.0,
                    multi_return: 0.05,
                },
                SynthClass {
                    code: 17,
                    count: deck,
                    layout: Layout::Patches { count: 4, radius: 8.0 },
                    z_mean: 1.5,
                    z_sigma: 1.2,
                    intensity_mean: 115.0,
                    intensity_sigma: 30.0,
                    multi_return: 0.15,
                },
                SynthClass {
                    code: 7,
                    count: noise,
                    layout: Layout::Scattered,
                    z_mean: 0.5,
                    z_sigma: 3.0,
                    intensity_mean: 90.0,
                    intensity_sigma: 40.0,
                    multi_return: 0.4,
                },
            ],
        }
    }

    /// Two uniform planes `gap` apart in z with vertical noise `sigma`.
    pub fn two_planes(per_class: usize, gap: f64, sigma: f64) -> Self {
        let plane = |code, z_mean| SynthClass {
            code,
            count: per_class,
            layout: Layout::Background,
            z_mean,
            z_sigma: sigma,
            intensity_mean: 100.0,
            intensity_sigma: 20.0,
            multi_return: 0.0,
        };
        Self {
            extent: 50.0,
            origin: [0.0, 0.0],
            scan_sigma: default_scan_sigma(),
            seed: None,
            classes: vec![plane(2, 0.0), plane(17, gap)],
        }
    }

    pub fn total_points(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }
}

fn normal(mean: f64, sigma: f64) -> Normal<f64> {
    Normal::new(mean, sigma.max(0.0)).expect("finite normal parameters")
}

/// Generates the cloud class by class, in spec order. Identical for equal
/// `(spec, seed)`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(seed));
    let extent = spec.extent;
    let mut discs: Vec<Vec<([f64; 2], f64)>> = Vec::with_capacity(spec.classes.len());
    for class in &spec.classes {
        let mut centers = Vec::new();
        if let Layout::Patches { count, radius } = class.layout {
            let margin = radius.min(extent / 2.0);
            for _ in 0..count {
                let c = [rng.random_range(margin..=extent - margin), rng.random_range(margin..=extent - margin)];
                centers.push((c, radius));
            }
        }
        discs.push(centers);
    }
    let all_discs: Vec<([f64; 2], f64)> = discs.iter().flatten().copied().collect();
    let inside_any = |p: [f64; 2]| {
        all_discs
            .iter()
            .any(|(c, r)| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r * r)
    };

    let mut points = Vec::with_capacity(spec.total_points());
    for (class, centers) in spec.classes.iter().zip(&discs) {
        let z = normal(class.z_mean, class.z_sigma);
        let intensity = normal(class.intensity_mean, class.intensity_sigma);
        let scan = normal(0.0, spec.scan_sigma);
        for _ in 0..class.count {
            let xy = match &class.layout {
                Layout::Patches { .. } if !centers.is_empty() => {
                    let (c, r) = centers[rng.random_range(0..centers.len())];
                    let rho = r * rng.random::<f64>().sqrt();
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    [c[0] + rho * theta.cos(), c[1] + rho * theta.sin()]
                }
                Layout::Background => {
                    let mut p = [rng.random_range(0.0..extent), rng.random_range(0.0..extent)];
                    for _ in 0..1000 {
                        if !inside_any(p) {
                            break;
                        }
                        p = [rng.random_range(0.0..extent), rng.random_range(0.0..extent)];
                    }
                    p
                }
                _ => [rng.random_range(0.0..extent), rng.random_range(0.0..extent)],
            };
            let (num_returns, return_number) = if rng.random::<f64>() < class.multi_return {
                let n = rng.random_range(2..=4u8);
                (n, rng.random_range(1..=n))
            } else {
                (1, 1)
            };
            // Scan angle follows the across-track position of a single
            // flight line down the middle of the tile.
            let across = (xy[0] / extent - 0.5) * 40.0;
            points.push(LidarPoint {
                x: spec.origin[0] + xy[0],
                y: spec.origin[1] + xy[1],
                z: z.sample(&mut rng),
                intensity: intensity.sample(&mut rng).clamp(0.0, 65_535.0).round(),
                scan_angle: (across + scan.sample(&mut rng)).clamp(-90.0, 90.0),
                num_returns,
                return_number,
                class_code: class.code,
            });
        }
    }
    PointCloud::new(points)
}
