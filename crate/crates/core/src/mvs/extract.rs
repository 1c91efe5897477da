use rayon::prelude::*;

use super::{CostVolume, HeightMap, PlaneSet, NO_LABEL};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// Default upper bound on the number of labels SGM accepts.
pub const DEFAULT_MAX_LABELS: usize = 1024;

/// Cost standing in for cells without a valid score at pixels that have
/// some valid cells; above every real cost.
const INVALID_COST: f64 = 2.0;

const DIRECTIONS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];

/// Sub-plane offset from a parabola through three costs, in units of the
/// plane step, within `[-0.5, 0.5]`.
fn parabola_offset(c0: f64, c1: f64, c2: f64) -> f64 {
    let den = c0 - 2.0 * c1 + c2;
    if den > 0.0 {
        (0.5 * (c0 - c2) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

fn refined_height(planes: &PlaneSet, k: usize, costs: impl Fn(usize) -> Option<f64>) -> f64 {
    let z = planes.levels();
    if k == 0 || k + 1 >= z.len() {
        return z[k];
    }
    let (Some(c0), Some(c1), Some(c2)) = (costs(k - 1), costs(k), costs(k + 1)) else {
        return z[k];
    };
    let t = parabola_offset(c0, c1, c2);
    if t < 0.0 {
        z[k] + t * (z[k] - z[k - 1])
    } else {
        z[k] + t * (z[k + 1] - z[k])
    }
}

fn check_planes(cv: &CostVolume, planes: &PlaneSet) -> Result<()> {
    if cv.num_planes() != planes.len() {
        return Err(Error::invalid(format!("cost volume has {} planes but plane set has {}", cv.num_planes(), planes.len())));
    }
    Ok(())
}

fn assemble(width: usize, height: usize, rows: Vec<(Vec<f32>, Vec<u16>)>) -> HeightMap {
    let mut heights = Vec::with_capacity(width * height);
    let mut labels = Vec::with_capacity(width * height);
    for (h, l) in rows {
        heights.extend(h);
        labels.extend(l);
    }
    HeightMap {
        heights: Raster::from_vec(width, height, heights).expect("height map size"),
        labels: Raster::from_vec(width, height, labels).expect("label map size"),
    }
}

/// Winner-take-all height per pixel. Ties go to the lower plane; pixels with
/// no valid cell are no-data.
pub fn extract_heightmap_wta(cv: &CostVolume, planes: &PlaneSet, refine: bool) -> Result<HeightMap> {
    check_planes(cv, planes)?;
    let (w, h) = (cv.width(), cv.height());
    let rows = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut heights = vec![f32::NAN; w];
            let mut labels = vec![NO_LABEL; w];
            for x in 0..w {
                let mut best: Option<(usize, f32)> = None;
                for k in 0..cv.num_planes() {
                    let c = cv.cost(x, y, k);
                    if c.is_finite() && best.is_none_or(|(_, b)| c < b) {
                        best = Some((k, c));
                    }
                }
                if let Some((k, _)) = best {
                    let valid = |j: usize| Some(cv.cost(x, y, j) as f64).filter(|c| c.is_finite());
                    let z = if refine { refined_height(planes, k, valid) } else { planes.levels()[k] };
                    heights[x] = z as f32;
                    labels[x] = k as u16;
                }
            }
            (heights, labels)
        })
        .collect();
    Ok(assemble(w, h, rows))
}

/// Per-cell costs used by SGM: invalid cells at partially valid pixels get
/// `INVALID_COST`; fully invalid pixels get zeros so paths pass through.
fn sgm_costs(cv: &CostVolume) -> (Vec<f64>, Vec<bool>) {
    let (w, h, n) = (cv.width(), cv.height(), cv.num_planes());
    let mut costs = vec![0.0f64; w * h * n];
    let mut any = vec![false; w * h];
    costs.par_chunks_mut(n).zip(any.par_iter_mut()).enumerate().for_each(|(i, (cell, any))| {
        let (x, y) = (i % w, i / w);
        *any = (0..n).any(|k| cv.cost(x, y, k).is_finite());
        if *any {
            for (k, c) in cell.iter_mut().enumerate() {
                let v = cv.cost(x, y, k);
                *c = if v.is_finite() { v as f64 } else { INVALID_COST };
            }
        }
    });
    (costs, any)
}

/// One path update: `L(k) = C(k) + min(prev(k), prev(k+-1) + p1,
/// min(prev) + p2) - min(prev)`.
#[inline]
fn path_step(cost: &[f64], prev: &[f64], out: &mut [f64], p1: f64, p2: f64) {
    let n = cost.len();
    let min_prev = prev.iter().copied().fold(f64::INFINITY, f64::min);
    for k in 0..n {
        let mut m = prev[k];
        if k > 0 {
            m = m.min(prev[k - 1] + p1);
        }
        if k + 1 < n {
            m = m.min(prev[k + 1] + p1);
        }
        m = m.min(min_prev + p2);
        out[k] = cost[k] + (m - min_prev);
    }
}

/// Adds the path costs of one direction, minus the data costs, into `sum`.
fn accumulate_direction(costs: &[f64], (w, h, n): (usize, usize, usize), (dx, dy): (isize, isize), p1: f64, p2: f64, sum: &mut [f64]) {
    let xs: Vec<usize> = if dx >= 0 { (0..w).collect() } else { (0..w).rev().collect() };
    if dy == 0 {
        sum.par_chunks_mut(w * n).enumerate().for_each(|(y, sum_row)| {
            let mut prev = vec![0.0; n];
            let mut cur = vec![0.0; n];
            for (i, &x) in xs.iter().enumerate() {
                let c = &costs[(y * w + x) * n..(y * w + x + 1) * n];
                if i == 0 {
                    cur.copy_from_slice(c);
                } else {
                    path_step(c, &prev, &mut cur, p1, p2);
                }
                for ((s, l), c) in sum_row[x * n..(x + 1) * n].iter_mut().zip(&cur).zip(c) {
                    *s += l - c;
                }
                std::mem::swap(&mut prev, &mut cur);
            }
        });
        return;
    }
    let ys: Vec<usize> = if dy > 0 { (0..h).collect() } else { (0..h).rev().collect() };
    let mut prev_row = vec![0.0f64; w * n];
    let mut cur_row = vec![0.0f64; w * n];
    for (j, &y) in ys.iter().enumerate() {
        cur_row.par_chunks_mut(n).enumerate().for_each(|(x, cur)| {
            let c = &costs[(y * w + x) * n..(y * w + x + 1) * n];
            let px = x as isize - dx;
            if j == 0 || px < 0 || px >= w as isize {
                cur.copy_from_slice(c);
            } else {
                let px = px as usize;
                path_step(c, &prev_row[px * n..(px + 1) * n], cur, p1, p2);
            }
        });
        let row = y * w * n..(y + 1) * w * n;
        for ((s, l), c) in sum[row.clone()].iter_mut().zip(&cur_row).zip(&costs[row]) {
            *s += l - c;
        }
        std::mem::swap(&mut prev_row, &mut cur_row);
    }
}

/// Semi-global labeling over plane indices with penalty `p1` for a one-plane
/// jump and `p2` for larger jumps, aggregated along 8 directions.
///
/// The aggregated cost is `C + sum_r (L_r - C)`, so the data term is counted
/// once. On a single scanline this is the exact min-marginal of the chain
/// and the labeling is the global optimum.
pub fn extract_heightmap_sgm(cv: &CostVolume, planes: &PlaneSet, p1: f64, p2: f64, refine: bool, max_labels: usize) -> Result<HeightMap> {
    check_planes(cv, planes)?;
    if !(p1 >= 0.0 && p2 >= p1 && p2.is_finite()) {
        return Err(Error::invalid(format!("SGM penalties need 0 <= p1 <= p2, got p1 = {p1}, p2 = {p2}")));
    }
    let n = cv.num_planes();
    if n > max_labels {
        return Err(Error::invalid(format!("{n} planes exceed the SGM label limit of {max_labels}")));
    }
    if n > u16::MAX as usize {
        return Err(Error::invalid("too many planes"));
    }
    let (w, h) = (cv.width(), cv.height());
    let (costs, any) = sgm_costs(cv);
    let mut sum = costs.clone();
    for dir in DIRECTIONS {
        accumulate_direction(&costs, (w, h, n), dir, p1, p2, &mut sum);
    }
    let rows = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut heights = vec![f32::NAN; w];
            let mut labels = vec![NO_LABEL; w];
            for x in 0..w {
                if !any[y * w + x] {
                    continue;
                }
                let s = &sum[(y * w + x) * n..(y * w + x + 1) * n];
                let mut k = 0;
                for j in 1..n {
                    if s[j] < s[k] {
                        k = j;
                    }
                }
                let valid = |j: usize| cv.cost(x, y, j).is_finite().then_some(s[j]);
                let z = if refine { refined_height(planes, k, valid) } else { planes.levels()[k] };
                heights[x] = z as f32;
                labels[x] = k as u16;
            }
            (heights, labels)
        })
        .collect();
    Ok(assemble(w, h, rows))
}

/// Energy of a labeling under the pairwise model SGM approximates: data
/// costs plus `p1`/`p2` over 8-connected neighbor pairs. No-data pixels do
/// not contribute.
pub fn labeling_energy(cv: &CostVolume, labels: &Raster<u16>, p1: f64, p2: f64) -> f64 {
    let (w, h) = (cv.width(), cv.height());
    let mut energy = 0.0;
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            if l == NO_LABEL {
                continue;
            }
            let c = cv.cost(x, y, l as usize);
            energy += if c.is_finite() { c as f64 } else { INVALID_COST };
            for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let m = labels.get(nx as usize, ny as usize);
                if m == NO_LABEL {
                    continue;
                }
                energy += match l.abs_diff(m) {
                    0 => 0.0,
                    1 => p1,
                    _ => p2,
                };
            }
        }
    }
    energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn volume(w: usize, h: usize, n: usize, f: impl Fn(usize, usize, usize) -> f32) -> CostVolume {
        let mut costs = Vec::new();
        for k in 0..n {
            for y in 0..h {
                for x in 0..w {
                    costs.push(f(x, y, k));
                }
            }
        }
        let counts = costs.iter().map(|c| u8::from(c.is_finite())).collect();
        CostVolume::from_parts(w, h, n, costs, counts).unwrap()
    }

    #[test]
    fn strict_minimum_is_exact() {
        let planes = PlaneSet::uniform(10.0, 20.0, 11).unwrap();
        let cv = volume(6, 4, 11, |x, y, k| ((k as isize - ((x + y) % 11) as isize).abs() as f32) / 11.0);
        let hm = extract_heightmap_wta(&cv, &planes, false).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(hm.heights.get(x, y), planes.levels()[(x + y) % 11] as f32);
            }
        }
    }

    #[test]
    fn symmetric_parabola_refines_to_plane() {
        let planes = PlaneSet::uniform(0.0, 5.0, 6).unwrap();
        let cv = volume(1, 1, 6, |_, _, k| ((k as f32 - 3.0).powi(2)) / 10.0);
        let hm = extract_heightmap_wta(&cv, &planes, true).unwrap();
        assert_eq!(hm.heights.get(0, 0), 3.0);
        let skewed = volume(1, 1, 6, |_, _, k| [0.9, 0.5, 0.2, 0.1, 0.3, 0.8][k]);
        let z = extract_heightmap_wta(&skewed, &planes, true).unwrap().heights.get(0, 0);
        assert!(z > 2.5 && z < 3.0);
    }

    #[test]
    fn ties_go_to_lower_plane() {
        let planes = PlaneSet::uniform(0.0, 3.0, 4).unwrap();
        let cv = volume(1, 1, 4, |_, _, k| [0.5, 0.2, 0.4, 0.2][k]);
        assert_eq!(extract_heightmap_wta(&cv, &planes, false).unwrap().labels.get(0, 0), 1);
    }

    #[test]
    fn invalid_pixels_are_no_data() {
        let planes = PlaneSet::uniform(0.0, 1.0, 2).unwrap();
        let cv = volume(2, 1, 2, |x, _, _| if x == 0 { f32::NAN } else { 0.5 });
        let hm = extract_heightmap_wta(&cv, &planes, true).unwrap();
        assert!(hm.heights.get(0, 0).is_nan());
        assert_eq!(hm.labels.get(0, 0), NO_LABEL);
        let sgm = extract_heightmap_sgm(&cv, &planes, 0.1, 0.2, true, 8).unwrap();
        assert!(sgm.heights.get(0, 0).is_nan());
    }

    #[test]
    fn zero_penalties_match_wta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f32> = (0..13 * 9 * 7).map(|_| if rng.random_bool(0.05) { f32::NAN } else { rng.random() }).collect();
        let cv = volume(13, 9, 7, |x, y, k| vals[(k * 9 + y) * 13 + x]);
        let planes = PlaneSet::uniform(0.0, 6.0, 7).unwrap();
        for refine in [false, true] {
            let a = extract_heightmap_wta(&cv, &planes, refine).unwrap();
            let b = extract_heightmap_sgm(&cv, &planes, 0.0, 0.0, refine, 1024).unwrap();
            assert_eq!(a.labels, b.labels);
            assert!(a.heights.data().iter().zip(b.heights.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn smoothing_reduces_variance_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h, n) = (24, 24, 9);
        let noise: Vec<f32> = (0..w * h * n).map(|_| rng.random::<f32>() * 0.3).collect();
        let cv = volume(w, h, n, |x, y, k| ((k as f32 - 4.0).abs() * 0.03 + noise[(k * h + y) * w + x]).min(1.0));
        let planes = PlaneSet::uniform(0.0, 8.0, n).unwrap();
        let wta = extract_heightmap_wta(&cv, &planes, false).unwrap();
        let sgm = extract_heightmap_sgm(&cv, &planes, 0.05, 0.2, false, 1024).unwrap();
        let var = |m: &HeightMap| {
            let d = m.heights.data();
            let mean = d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
            d.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d.len() as f64
        };
        assert!(var(&sgm) < var(&wta));
        assert!(labeling_energy(&cv, &sgm.labels, 0.05, 0.2) < labeling_energy(&cv, &wta.labels, 0.05, 0.2));
    }

    #[test]
    fn scanline_is_global_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let (w, n) = (rng.random_range(2..6), rng.random_range(2..5));
            let (p1, p2) = (rng.random_range(0.0..0.2), rng.random_range(0.2..0.5));
            let vals: Vec<f32> = (0..w * n).map(|_| rng.random()).collect();
            let cv = volume(w, 1, n, |x, _, k| vals[k * w + x]);
            let planes = PlaneSet::uniform(0.0, (n - 1) as f64, n).unwrap();
            let sgm = extract_heightmap_sgm(&cv, &planes, p1, p2, false, 1024).unwrap();
            let best = (0..n.pow(w as u32))
                .map(|code| Raster::from_fn(w, 1, |x, _| (code / n.pow(x as u32) % n) as u16))
                .min_by(|a, b| labeling_energy(&cv, a, p1, p2).total_cmp(&labeling_energy(&cv, b, p1, p2)))
                .unwrap();
            assert_eq!(sgm.labels, best);
        }
    }

    #[test]
    fn label_guard_and_penalty_checks() {
        let cv = volume(2, 2, 5, |_, _, _| 0.5);
        let planes = PlaneSet::uniform(0.0, 4.0, 5).unwrap();
        assert!(extract_heightmap_sgm(&cv, &planes, 0.1, 0.2, false, 4).is_err());
        assert!(extract_heightmap_sgm(&cv, &planes, 0.3, 0.2, false, 1024).is_err());
        assert!(extract_heightmap_wta(&cv, &PlaneSet::uniform(0.0, 1.0, 2).unwrap(), false).is_err());
    }
}
