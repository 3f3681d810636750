//! Randomized invariant checks shared by the property tests and the
//! acceptance target. Each check builds its own small instance from a seed
//! and returns a description of the first violation.

use nalgebra::{Point2, Point3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raysense::channel::{assemble_cir, sample_bandlimited, CirTaps, Tap};
use raysense::raytrace::enumerate_paths;
use raysense::scene::{GridSpec, ParkingLot, RadioModel};
use raysense::sensing::{
    default_kernel_sigma, ellipse_layer, fuse, score_lots, DifferentialCir, Heatmap,
};
use raysense::SPEED_OF_LIGHT;

use super::{random_point, random_surface, to_geometry};

pub type Check = Result<(), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn radio(bandwidth_hz: f64, num_samples: usize) -> RadioModel {
    RadioModel {
        center_frequency_hz: 26e9,
        bandwidth_hz,
        tx_power_dbm: 22.0,
        antenna_gain_dbi: 0.0,
        num_samples,
        max_reflection_order: 2,
    }
}

fn random_taps<R: Rng>(rng: &mut R, count: usize, window: f64) -> Vec<Tap> {
    let mut taps: Vec<Tap> = (0..count)
        .map(|_| Tap {
            delay: rng.random_range(0.0..window),
            amplitude: Complex64::from_polar(
                rng.random_range(1e-4..1.0),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            ),
        })
        .collect();
    taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    taps
}

fn cir(taps: Vec<Tap>) -> CirTaps {
    CirTaps {
        tx_id: "a".into(),
        rx_id: "b".into(),
        taps,
    }
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Path multisets are symmetric under tx/rx exchange, and so are the
/// sampled CIRs built from them.
pub fn reciprocity(seed: u64) -> Check {
    let mut rng = rng(seed);
    let count = 1 + (seed % 3) as usize;
    let surfaces: Vec<_> = (0..count).map(|_| random_surface(&mut rng)).collect();
    let (tx, rx) = (random_point(&mut rng), random_point(&mut rng));
    let g = to_geometry(&surfaces);
    let forward = enumerate_paths(&g, &tx, &rx, 2);
    let backward = enumerate_paths(&g, &rx, &tx, 2);
    let key = |paths: &[raysense::raytrace::PropagationPath]| {
        let mut k: Vec<(usize, f64)> = paths.iter().map(|p| (p.order(), p.total_length)).collect();
        k.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        k
    };
    let (kf, kb) = (key(&forward), key(&backward));
    if kf.len() != kb.len() {
        return Err(format!("seed {seed}: {} paths forward, {} backward", kf.len(), kb.len()));
    }
    for (f, b) in kf.iter().zip(&kb) {
        if f.0 != b.0 || (f.1 - b.1).abs() > 1e-9 * f.1 {
            return Err(format!("seed {seed}: path {f:?} vs reversed {b:?}"));
        }
    }
    let r = radio(400e6, 128);
    let cf = assemble_cir(&forward, &g, &r, "a", "b").map_err(|e| e.to_string())?;
    let cb = assemble_cir(&backward, &g, &r, "a", "b").map_err(|e| e.to_string())?;
    let (sf, sb) = (sample_bandlimited(&cf, &r, 0.0), sample_bandlimited(&cb, &r, 0.0));
    let scale: f64 = cf.taps.iter().map(|t| t.amplitude.norm()).sum::<f64>().max(f64::MIN_POSITIVE);
    let diff = max_abs_diff(&sf.values, &sb.values);
    // Path lengths agree to rounding; the carrier phase (hundreds of cycles)
    // amplifies that to ~1e-12 relative.
    if diff > 1e-9 * scale {
        return Err(format!("seed {seed}: sampled CIRs differ by {diff:e}"));
    }
    Ok(())
}

/// Sampling a concatenated tap list equals the sum of the parts.
pub fn linearity(seed: u64) -> Check {
    let mut rng = rng(seed);
    let r = radio([100e6, 200e6, 400e6][(seed % 3) as usize], 64);
    let window = 63.0 / r.bandwidth_hz;
    let (na, nb) = (rng.random_range(1..6), rng.random_range(1..6));
    let a = random_taps(&mut rng, na, window);
    let b = random_taps(&mut rng, nb, window);
    let mut both = a.clone();
    both.extend(b.iter().copied());
    let scale: f64 = both.iter().map(|t| t.amplitude.norm()).sum();
    let sa = sample_bandlimited(&cir(a), &r, 0.0);
    let sb = sample_bandlimited(&cir(b), &r, 0.0);
    let sum: Vec<Complex64> = sa.values.iter().zip(&sb.values).map(|(x, y)| x + y).collect();
    let joint = sample_bandlimited(&cir(both), &r, 0.0);
    let diff = max_abs_diff(&joint.values, &sum);
    if diff > 1e-14 * scale {
        return Err(format!("seed {seed}: superposition off by {diff:e}"));
    }
    Ok(())
}

pub fn small_grid() -> GridSpec {
    GridSpec {
        origin: Point2::new(0.0, 0.0),
        cell_size: 0.25,
        width: 40,
        height: 40,
        z: 1.0,
    }
}

fn focus<R: Rng>(rng: &mut R) -> Point3<f64> {
    Point3::new(rng.random_range(0.5..9.5), rng.random_range(0.5..9.5), 1.0)
}

fn random_differential<R: Rng>(rng: &mut R, name: &str, n: usize, sparsity: f64) -> DifferentialCir {
    DifferentialCir {
        tx_id: name.into(),
        rx_id: "rx".into(),
        sample_rate: 400e6,
        start_time: 0.0,
        values: (0..n)
            .map(|_| {
                if rng.random_bool(sparsity) {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect(),
        reference_peak: 1.0,
    }
}

/// Nonzero layers peak at exactly one; fused values stay within the number
/// of links.
pub fn normalization(seed: u64) -> Check {
    let mut rng = rng(seed);
    let grid = small_grid();
    let links = rng.random_range(1..6);
    let mut layers = Vec::new();
    for l in 0..links {
        let d = random_differential(&mut rng, &format!("tx{l}"), 64, 0.2);
        let (tx, rx) = (focus(&mut rng), focus(&mut rng));
        let layer = ellipse_layer(&d, &tx, &rx, &grid);
        if layer.values.iter().any(|v| !(*v >= 0.0)) {
            return Err(format!("seed {seed}: negative or NaN cell"));
        }
        if !layer.is_zero() && layer.max() != 1.0 {
            return Err(format!("seed {seed}: layer max {}", layer.max()));
        }
        layers.push(layer);
    }
    let fused = fuse(&layers).map_err(|e| e.to_string())?;
    if fused.max() > links as f64 {
        return Err(format!("seed {seed}: fused max {} > {links}", fused.max()));
    }
    Ok(())
}

fn ellipse_fits(a: &Point3<f64>, b: &Point3<f64>, range: f64, grid: &GridSpec, margin: f64) -> bool {
    let center = (a.coords + b.coords) / 2.0;
    let semi_major = range / 2.0;
    let half_focal = (b - a).norm() / 2.0;
    let semi_minor = (semi_major * semi_major - half_focal * half_focal).sqrt();
    let axis = (b - a).normalize();
    let ortho = nalgebra::Vector3::new(-axis.y, axis.x, 0.0);
    let extent = grid.extent();
    (0..64).all(|k| {
        let t = k as f64 * std::f64::consts::TAU / 64.0;
        let p = center + axis * (semi_major * t.cos()) + ortho * (semi_minor * t.sin());
        p.x >= grid.origin.x + margin
            && p.y >= grid.origin.y + margin
            && p.x <= extent.x - margin
            && p.y <= extent.y - margin
    })
}

/// A single on-grid tap lights up only cells whose range sum lies within
/// σ plus one cell diagonal of the tap's range.
pub fn ellipse_membership(seed: u64) -> Check {
    let mut rng = rng(seed);
    let grid = small_grid();
    let fs = [100e6, 200e6, 400e6][(seed % 3) as usize];
    let step = SPEED_OF_LIGHT / fs;
    // Draw foci and an on-grid range until the whole ellipse fits inside the
    // grid; an ellipse that leaves the grid has only kernel tails to normalize.
    let (tx, rx, n) = loop {
        let (a, b) = (focus(&mut rng), focus(&mut rng));
        let baseline = (a - b).norm();
        if baseline < 0.5 {
            continue;
        }
        let first = (baseline / step).floor() as usize + 1;
        let n = first + rng.random_range(0..3);
        if ellipse_fits(&a, &b, n as f64 * step, &grid, 0.5) {
            break (a, b, n);
        }
    };
    let r = radio(fs, n + 16);
    let tau = n as f64 / fs;
    let taps = cir(vec![Tap {
        delay: tau,
        amplitude: Complex64::from_polar(rng.random_range(1e-6..1.0), rng.random_range(0.0..6.0)),
    }]);
    let sampled = sample_bandlimited(&taps, &r, 0.0);
    let d = DifferentialCir {
        tx_id: "a".into(),
        rx_id: "b".into(),
        sample_rate: fs,
        start_time: 0.0,
        values: sampled.values,
        reference_peak: 0.0,
    };
    let layer = ellipse_layer(&d, &tx, &rx, &grid);
    let sigma = default_kernel_sigma(fs);
    let bound = sigma + grid.cell_size * std::f64::consts::SQRT_2;
    let cut = (-0.5f64).exp() * layer.max();
    let mut lit = 0;
    for (i, v) in layer.values.iter().enumerate() {
        if *v >= cut && *v > 0.0 {
            lit += 1;
            let c = grid.cell_center(i);
            let p = Point3::new(c.x, c.y, grid.z);
            let miss = ((p - tx).norm() + (p - rx).norm() - SPEED_OF_LIGHT * tau).abs();
            if miss > bound {
                return Err(format!("seed {seed}: cell {i} is {miss} m off the ellipse (bound {bound})"));
            }
        }
    }
    // The ellipse may leave the grid; only require that the check was not vacuous
    // when the layer is nonzero.
    if !layer.is_zero() && lit == 0 {
        return Err(format!("seed {seed}: nonzero layer without lit cells"));
    }
    Ok(())
}

fn random_lots<R: Rng>(rng: &mut R, count: usize) -> Vec<ParkingLot> {
    (0..count)
        .map(|i| {
            let (x, y) = (rng.random_range(0.0..8.0), rng.random_range(0.0..8.0));
            let (w, h) = (rng.random_range(0.6..2.0), rng.random_range(0.6..2.0));
            ParkingLot {
                id: format!("lot{i}"),
                polygon: vec![
                    Point2::new(x, y),
                    Point2::new(x + w, y),
                    Point2::new(x + w, y + h),
                    Point2::new(x, y + h),
                ],
            }
        })
        .collect()
}

fn fused_scores(ds: &[DifferentialCir], foci: &[(Point3<f64>, Point3<f64>)], lots: &[ParkingLot]) -> Result<(Heatmap, Vec<f64>), String> {
    let grid = small_grid();
    let layers: Vec<Heatmap> = ds
        .iter()
        .zip(foci)
        .map(|(d, (tx, rx))| ellipse_layer(d, tx, rx, &grid))
        .collect();
    let fused = fuse(&layers).map_err(|e| e.to_string())?;
    let scores = score_lots(&fused, lots)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| s.score)
        .collect();
    Ok((fused, scores))
}

/// Scaling every differential by one positive constant leaves the fused
/// heatmap and the ordering of lot scores unchanged.
pub fn scale_invariance(seed: u64) -> Check {
    let mut rng = rng(seed);
    let links = rng.random_range(1..5);
    let ds: Vec<DifferentialCir> = (0..links)
        .map(|l| random_differential(&mut rng, &format!("tx{l}"), 64, 0.1))
        .collect();
    let foci: Vec<_> = (0..links).map(|_| (focus(&mut rng), focus(&mut rng))).collect();
    let lots = random_lots(&mut rng, 4);
    let k = 10f64.powf(rng.random_range(-6.0..6.0));
    let scaled: Vec<_> = ds.iter().map(|d| d.scaled(k)).collect();
    let (h1, s1) = fused_scores(&ds, &foci, &lots)?;
    let (h2, s2) = fused_scores(&scaled, &foci, &lots)?;
    let diff = h1
        .values
        .iter()
        .zip(&h2.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if diff > 1e-12 * links as f64 {
        return Err(format!("seed {seed}: fused heatmap moved by {diff:e} under scale {k:e}"));
    }
    let top = s1.iter().copied().fold(0.0, f64::max);
    for i in 0..s1.len() {
        for j in 0..s1.len() {
            if s1[i] > s1[j] + 1e-9 * top && !(s2[i] > s2[j]) {
                return Err(format!("seed {seed}: lots {i} and {j} swap rank under scale {k:e}"));
            }
        }
    }
    Ok(())
}

/// Runs `check` over `count` consecutive seeds, failing on the first
/// violation.
pub fn run_suite(check: fn(u64) -> Check, start: u64, count: u64) -> Check {
    (start..start + count).try_for_each(check)
}
