use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{wrap, GeometryError, Labeling, LayeredTessellation, Shape, Tessellation};

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymDiff {
    pub value: f64,
    pub stderr: f64,
}

/// Discrete `E_{x,s}` together with the per-radius curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Distance {
    pub value: f64,
    /// Radius attaining the sup.
    pub radius: f64,
    /// `(r, measure, stderr)` per radius.
    pub curve: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CenterRecord {
    pub x: [f64; 2],
    pub comparator: LayeredTessellation,
    pub value: f64,
    pub radius: f64,
    /// Shift of the value when the measure moves up by two standard errors.
    pub confidence: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityCertificate {
    pub s: f64,
    pub e: f64,
    pub samples: usize,
    pub seed: u64,
    pub centers: Vec<CenterRecord>,
}

/// Radius ladder `2^{-j}`, `j = 0..=levels`.
pub fn default_radii(levels: usize) -> Vec<f64> {
    (0..=levels).map(|j| 0.5f64.powi(j as i32)).collect()
}

fn radius_seed(seed: u64, r: f64) -> u64 {
    seed ^ r.to_bits().rotate_left(17)
}

/// Uniform points in `B_r(center)`; the stream depends only on `(seed, r)`.
pub fn ball_points(center: [f64; 2], r: f64, samples: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(radius_seed(seed, r));
    (0..samples)
        .map(|_| {
            let rho = r * rng.random::<f64>().sqrt();
            let t = std::f64::consts::TAU * rng.random::<f64>();
            [center[0] + rho * t.cos(), center[1] + rho * t.sin()]
        })
        .collect()
}

fn check_labels(a: &[usize], b: &[usize]) -> Result<(), GeometryError> {
    let sub = |x: &[usize], y: &[usize]| x.iter().all(|l| y.contains(l));
    if sub(a, b) || sub(b, a) {
        Ok(())
    } else {
        Err(GeometryError::Incomparable(a.to_vec(), b.to_vec()))
    }
}

fn mismatch(labels: &[usize], points: &[[f64; 2]], other: &impl Labeling) -> SymDiff {
    let n = points.len();
    let bad = labels.iter().zip(points).filter(|(l, x)| **l != other.label_at(**x)).count();
    let p = bad as f64 / n as f64;
    // each mismatched point lies in D_ℓ △ D'_ℓ for two labels
    SymDiff { value: 2.0 * p, stderr: 2.0 * (p * (1.0 - p) / n as f64).sqrt() }
}

/// `|B_r|^{-1} Σ_ℓ |(D_ℓ △ D'_ℓ) ∩ B_r(center)|` by Monte Carlo.
pub fn sym_diff_measure(
    a: &impl Labeling,
    b: &impl Labeling,
    center: [f64; 2],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<SymDiff, GeometryError> {
    check_labels(&a.label_set(), &b.label_set())?;
    let pts = ball_points(center, r, samples.max(1), seed);
    let la: Vec<usize> = pts.iter().map(|x| a.label_at(*x)).collect();
    Ok(mismatch(&la, &pts, b))
}

/// `sup_j r_j^{-s} (sym_diff_measure at r_j)^{1/2}`.
pub fn regularity_distance(
    a: &impl Labeling,
    b: &impl Labeling,
    center: [f64; 2],
    s: f64,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Distance, GeometryError> {
    let mut out = Distance { value: 0.0, radius: radii.first().copied().unwrap_or(1.0), curve: Vec::new() };
    for &r in radii {
        let m = sym_diff_measure(a, b, center, r, samples, seed)?;
        let v = r.powf(-s) * m.value.sqrt();
        if v > out.value {
            out.value = v;
            out.radius = r;
        }
        out.curve.push((r, m.value, m.stderr));
    }
    Ok(out)
}

/// Nearest interface point, unit normal pointing out of the inner phase, and the inner
/// phase's width along the normal.
fn nearest_interface(tess: &Tessellation, x: [f64; 2]) -> Option<([f64; 2], [f64; 2], f64, usize)> {
    let mut best: Option<(f64, [f64; 2], [f64; 2], f64, usize)> = None;
    let mut offer = |d: f64, p: [f64; 2], n: [f64; 2], w: f64, l: usize| {
        if best.is_none_or(|b| d < b.0) {
            best = Some((d, p, n, w, l));
        }
    };
    for phase in &tess.phases {
        match &phase.shape {
            Shape::Disk { center, radius } => {
                for i in -1..=1 {
                    for j in -1..=1 {
                        let c = [center[0] + i as f64, center[1] + j as f64];
                        let v = [x[0] - c[0], x[1] - c[1]];
                        let len = v[0].hypot(v[1]);
                        let n = if len > 0.0 { [v[0] / len, v[1] / len] } else { [1.0, 0.0] };
                        let p = [c[0] + radius * n[0], c[1] + radius * n[1]];
                        offer((len - radius).abs(), p, n, 2.0 * radius, phase.label);
                    }
                }
            }
            Shape::Polygon { vertices } => {
                let k = vertices.len();
                let area2: f64 = (0..k)
                    .map(|m| {
                        let a = vertices[m];
                        let b = vertices[(m + 1) % k];
                        a[0] * b[1] - a[1] * b[0]
                    })
                    .sum();
                let orient = area2.signum();
                for i in -1..=1 {
                    for j in -1..=1 {
                        for m in 0..k {
                            let a = [vertices[m][0] + i as f64, vertices[m][1] + j as f64];
                            let b = [vertices[(m + 1) % k][0] + i as f64, vertices[(m + 1) % k][1] + j as f64];
                            let e = [b[0] - a[0], b[1] - a[1]];
                            let len2 = e[0] * e[0] + e[1] * e[1];
                            let t = (((x[0] - a[0]) * e[0] + (x[1] - a[1]) * e[1]) / len2).clamp(0.0, 1.0);
                            let p = [a[0] + t * e[0], a[1] + t * e[1]];
                            let len = len2.sqrt();
                            let n = [orient * e[1] / len, -orient * e[0] / len];
                            let width = vertices
                                .iter()
                                .map(|v| (v[0] + i as f64 - p[0]) * n[0] + (v[1] + j as f64 - p[1]) * n[1])
                                .fold(0.0f64, f64::min)
                                .abs();
                            offer((x[0] - p[0]).hypot(x[1] - p[1]), p, n, width, phase.label);
                        }
                    }
                }
            }
            Shape::Slab { direction, breakpoints } => {
                let t = x[0] * direction[0] + x[1] * direction[1];
                for z in [-1.0, 0.0, 1.0] {
                    for (h, sign) in [(breakpoints[0] + z, -1.0), (breakpoints[1] + z, 1.0)] {
                        let p = [x[0] + (h - t) * direction[0], x[1] + (h - t) * direction[1]];
                        let n = [sign * direction[0], sign * direction[1]];
                        offer((t - h).abs(), p, n, breakpoints[1] - breakpoints[0], phase.label);
                    }
                }
            }
            Shape::Background | Shape::Mask { .. } => {}
        }
    }
    best.map(|(_, p, n, w, l)| (p, n, w, l))
}

/// Comparator family at a center: constant, half-planes and slabs normal to the nearest
/// interface over a grid of tangent offsets.
fn comparators(tess: &Tessellation, x: [f64; 2]) -> Vec<LayeredTessellation> {
    let mut out = vec![LayeredTessellation::constant(tess.label_at(x))];
    let Some((p, n, width, inner)) = nearest_interface(tess, x) else {
        return out;
    };
    let eta = 1e-9;
    let outer = tess.label_at([p[0] + eta * n[0], p[1] + eta * n[1]]);
    let h0 = p[0] * n[0] + p[1] * n[1];
    for k in -4..=4 {
        let h = h0 + 0.005 * k as f64;
        if let Ok(l) = LayeredTessellation::new(n, vec![h], vec![inner, outer]) {
            out.push(l);
        }
        if let Ok(l) = LayeredTessellation::new(n, vec![h - width, h], vec![outer, inner, outer]) {
            out.push(l);
        }
    }
    out
}

/// Interface-adjacent centers, `count` per shaped phase.
pub fn interface_centers(tess: &Tessellation, count: usize) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for phase in &tess.phases {
        match &phase.shape {
            Shape::Disk { center, radius } => {
                for k in 0..count {
                    let t = std::f64::consts::TAU * k as f64 / count as f64;
                    out.push(wrap([center[0] + radius * t.cos(), center[1] + radius * t.sin()]));
                }
            }
            Shape::Polygon { vertices } => {
                let m = vertices.len();
                let lens: Vec<f64> = (0..m)
                    .map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % m];
                        (b[0] - a[0]).hypot(b[1] - a[1])
                    })
                    .collect();
                let total: f64 = lens.iter().sum();
                for k in 0..count {
                    let mut arc = total * (k as f64 + 0.5) / count as f64;
                    let mut i = 0;
                    while arc > lens[i] && i + 1 < m {
                        arc -= lens[i];
                        i += 1;
                    }
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    let t = arc / lens[i];
                    out.push(wrap([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]));
                }
            }
            Shape::Slab { direction, breakpoints } => {
                let tangent = [-direction[1], direction[0]];
                for k in 0..count {
                    let u = (k as f64 + 0.5) / count as f64 - 0.5;
                    out.push(wrap([
                        breakpoints[0] * direction[0] + u * tangent[0],
                        breakpoints[0] * direction[1] + u * tangent[1],
                    ]));
                }
            }
            Shape::Mask { n, cells, .. } => {
                let h = 1.0 / *n as f64;
                let mut found = Vec::new();
                for j in 0..*n {
                    for i in 0..*n {
                        if cells[j * n + i] != cells[j * n + (i + 1) % n] {
                            found.push([(i + 1) as f64 * h - 0.5, (j as f64 + 0.5) * h - 0.5]);
                        }
                    }
                }
                let stride = (found.len() / count.max(1)).max(1);
                out.extend(found.into_iter().step_by(stride).take(count).map(wrap));
            }
            Shape::Background => {}
        }
    }
    out
}

/// Measured `(E, s)` certificate over the given centers.
pub fn estimate_certificate(
    tess: &Tessellation,
    s: f64,
    centers: &[[f64; 2]],
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> RegularityCertificate {
    if let Some(lam) = tess.as_layered() {
        let centers = centers
            .iter()
            .map(|&x| CenterRecord { x, comparator: lam.clone(), value: 0.0, radius: radii[0], confidence: 0.0 })
            .collect();
        return RegularityCertificate { s, e: 0.0, samples, seed, centers };
    }
    let records: Vec<CenterRecord> = centers
        .par_iter()
        .map(|&x| {
            let clouds: Vec<(f64, Vec<[f64; 2]>, Vec<usize>)> = radii
                .iter()
                .map(|&r| {
                    let pts = ball_points(x, r, samples, seed);
                    let la = pts.iter().map(|p| tess.label_at(*p)).collect();
                    (r, pts, la)
                })
                .collect();
            let mut best: Option<CenterRecord> = None;
            for comp in comparators(tess, x) {
                let mut value = 0.0;
                let mut radius = radii[0];
                let mut confidence = 0.0;
                for (r, pts, la) in &clouds {
                    let m = mismatch(la, pts, &comp);
                    let v = r.powf(-s) * m.value.sqrt();
                    if v > value {
                        value = v;
                        radius = *r;
                        confidence = r.powf(-s) * ((m.value + 2.0 * m.stderr).sqrt() - m.value.sqrt());
                    }
                }
                if best.as_ref().is_none_or(|b| value < b.value) {
                    best = Some(CenterRecord { x, comparator: comp, value, radius, confidence });
                }
            }
            best.expect("comparator family is never empty")
        })
        .collect();
    let e = records.iter().map(|c| c.value).fold(0.0, f64::max);
    RegularityCertificate { s, e, samples, seed, centers: records }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Phase;
    use std::f64::consts::PI;

    /// Area of the intersection of disks of radii `r`, `big` with centers `d` apart.
    fn lens(r: f64, big: f64, d: f64) -> f64 {
        let a = ((d * d + r * r - big * big) / (2.0 * d * r)).clamp(-1.0, 1.0).acos();
        let b = ((d * d + big * big - r * r) / (2.0 * d * big)).clamp(-1.0, 1.0).acos();
        let k = ((-d + r + big) * (d + r - big) * (d - r + big) * (d + r + big)).max(0.0).sqrt();
        r * r * a + big * big * b - 0.5 * k
    }

    #[test]
    fn identical_tessellations_have_zero_distance() {
        let t = Tessellation::disk([0.1, 0.0], 0.3);
        let m = sym_diff_measure(&t, &t, [0.4, 0.0], 0.2, 1000, 1).unwrap();
        assert_eq!(m, SymDiff { value: 0.0, stderr: 0.0 });
        let d = regularity_distance(&t, &t, [0.4, 0.0], 0.5, &default_radii(8), 1000, 1).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn incomparable_label_sets() {
        let a = LayeredTessellation::constant(0);
        let b = LayeredTessellation::constant(1);
        assert!(matches!(sym_diff_measure(&a, &b, [0.0, 0.0], 0.5, 1000, 0), Err(GeometryError::Incomparable(..))));
    }

    #[test]
    fn shifted_laminates_match_chord_slab_area() {
        let h: f64 = 0.05;
        let r: f64 = 0.2;
        let a = LayeredTessellation::new([0.0, 1.0], vec![0.0], vec![0, 1]).unwrap();
        let b = LayeredTessellation::new([0.0, 1.0], vec![h], vec![0, 1]).unwrap();
        // centered on the mid-interface x₂ = h/2
        let y = h / 2.0;
        let seg = |t: f64| t * (r * r - t * t).sqrt() + r * r * (t / r).asin();
        let slab = seg(y) - seg(-y);
        let exact = 2.0 * slab / (PI * r * r);
        let m = sym_diff_measure(&a, &b, [0.0, y], r, 200_000, 3).unwrap();
        assert!((m.value - exact).abs() < 4.0 * m.stderr, "{} vs {exact}", m.value);
    }

    #[test]
    fn disk_against_tangent_half_plane_matches_lens_oracle() {
        let big = 0.3;
        let disk = Tessellation::disk([0.0, 0.0], big);
        let half = LayeredTessellation::new([1.0, 0.0], vec![big], vec![1, 0]).unwrap();
        for r in [0.2, 0.1, 0.05] {
            let exact = 2.0 * (PI * r * r / 2.0 - lens(r, big, big)) / (PI * r * r);
            let m = sym_diff_measure(&disk, &half, [big, 0.0], r, 100_000, 11).unwrap();
            assert!((m.value - exact).abs() < 4.0 * m.stderr + 1e-12, "r={r}: {} vs {exact}", m.value);
        }
    }

    #[test]
    fn standard_error_halves_with_four_times_the_samples() {
        let disk = Tessellation::disk([0.0, 0.0], 0.3);
        let half = LayeredTessellation::new([1.0, 0.0], vec![0.3], vec![1, 0]).unwrap();
        let a = sym_diff_measure(&disk, &half, [0.3, 0.0], 0.25, 10_000, 5).unwrap();
        let b = sym_diff_measure(&disk, &half, [0.3, 0.0], 0.25, 40_000, 5).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
        assert!(a.value <= 2.0);
    }

    #[test]
    fn distance_is_symmetric_and_monotone_in_radii() {
        let disk = Tessellation::disk([0.0, 0.0], 0.3);
        let half = LayeredTessellation::new([1.0, 0.0], vec![0.3], vec![1, 0]).unwrap();
        let x = [0.3, 0.0];
        let ab = regularity_distance(&disk, &half, x, 0.5, &[0.1, 0.05], 4000, 2).unwrap();
        let ba = regularity_distance(&half, &disk, x, 0.5, &[0.1, 0.05], 4000, 2).unwrap();
        assert_eq!(ab.value, ba.value);
        let more = regularity_distance(&disk, &half, x, 0.5, &[0.1, 0.05, 0.2], 4000, 2).unwrap();
        assert!(more.value >= ab.value);
    }

    #[test]
    fn laminate_certificate_is_zero() {
        let t = Tessellation::laminate_e2(0, 1);
        let c = estimate_certificate(&t, 0.7, &interface_centers(&t, 4), &default_radii(8), 1000, 0);
        assert_eq!(c.e, 0.0);
    }

    #[test]
    fn touching_disks_have_a_finite_certificate() {
        let t = Tessellation {
            dim: 2,
            phases: vec![
                Phase { label: 0, shape: Shape::Background },
                Phase { label: 1, shape: Shape::Disk { center: [-0.2, 0.0], radius: 0.2 } },
                Phase { label: 1, shape: Shape::Disk { center: [0.2, 0.0], radius: 0.2 } },
            ],
        };
        let radii: Vec<f64> = (2..=8).map(|j| 0.5f64.powi(j)).collect();
        let c = estimate_certificate(&t, 0.5, &[[0.0, 0.0]], &radii, 20_000, 9);
        assert!(c.e.is_finite() && c.e < 2.0, "{}", c.e);
        let per_radius: Vec<f64> = radii.iter().map(|&r| {
            let m = sym_diff_measure(&t, &c.centers[0].comparator, [0.0, 0.0], r, 20_000, 9).unwrap();
            r.powf(-0.5) * m.value.sqrt()
        }).collect();
        assert!(per_radius.last().unwrap() <= &(2.0 * per_radius[0] + 0.1));
    }
}
