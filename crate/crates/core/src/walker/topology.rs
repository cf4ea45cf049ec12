use ndarray::Array2;

use crate::data::{LabelMap, Tissue};

const MEDIAN_WINDOW: usize = 5;

/// Boundary depths `(lumen_end, media_end)` of the nested labelling
/// `1…1 2…2 3…3` that changes the fewest labels along a ray.
///
/// Ties prefer the shallower lumen boundary, then the deeper media boundary.
pub fn monotone_boundaries(ray: &[Tissue]) -> (usize, usize) {
    let n = ray.len();
    // cost(L, M) = f(L) + g(M) with f(L) = P2(L) − P1(L) and
    // g(M) = P3(M) − P2(M) + n − P3(n), where Pk counts class k in the prefix.
    let mut prefix = vec![[0i64; 3]; n + 1];
    for (d, t) in ray.iter().enumerate() {
        prefix[d + 1] = prefix[d];
        prefix[d + 1][t.index()] += 1;
    }
    let total_externa = prefix[n][2];
    let f = |l: usize| prefix[l][1] - prefix[l][0];
    let g = |m: usize| prefix[m][2] - prefix[m][1] + n as i64 - total_externa;

    let mut best_l = 0;
    let mut best = (i64::MAX, 0usize, 0usize);
    for m in 0..=n {
        if f(m) < f(best_l) {
            best_l = m;
        }
        let cost = f(best_l) + g(m);
        let better = cost < best.0 || (cost == best.0 && (best_l < best.1 || (best_l == best.1 && m > best.2)));
        if better {
            best = (cost, best_l, m);
        }
    }
    (best.1, best.2)
}

fn circular_median(values: &[usize]) -> Vec<usize> {
    let n = values.len();
    let half = MEDIAN_WINDOW / 2;
    (0..n)
        .map(|i| {
            let mut window: Vec<usize> = (0..MEDIAN_WINDOW)
                .map(|k| values[(i + n * MEDIAN_WINDOW + k - half) % n])
                .collect();
            window.sort_unstable();
            window[half]
        })
        .collect()
}

/// Fills rays without lumen by circular linear interpolation between the
/// nearest rays that have one.
fn interpolate_missing(values: &mut [usize], present: &[bool]) {
    let n = values.len();
    let anchors: Vec<usize> = (0..n).filter(|&i| present[i]).collect();
    if anchors.is_empty() || anchors.len() == n {
        return;
    }
    for i in 0..n {
        if present[i] {
            continue;
        }
        let next = anchors.iter().copied().find(|&a| a > i).unwrap_or(anchors[0] + n);
        let prev = anchors.iter().rev().copied().find(|&a| a < i).map_or(anchors[anchors.len() - 1] as isize - n as isize, |a| a as isize);
        let span = (next as isize - prev) as f64;
        let t = (i as isize - prev) as f64 / span;
        let a = values[prev.rem_euclid(n as isize) as usize] as f64;
        let b = values[next % n] as f64;
        values[i] = (a + t * (b - a)).round() as usize;
    }
}

/// Radially nests a polar label map (rows are scan lines).
///
/// Each ray is replaced by its closest `lumen → media → externa` sequence,
/// rays lacking lumen borrow a boundary from their angular neighbours, and
/// both boundary depths are smoothed by a circular median over 5 rays.
pub fn enforce_topology(labels: &LabelMap) -> LabelMap {
    let (n_rays, n_depth) = labels.dim();
    let grid = labels.labels();
    let mut lumen_end = Vec::with_capacity(n_rays);
    let mut media_end = Vec::with_capacity(n_rays);
    for ray in grid.rows() {
        let ray: Vec<Tissue> = ray.to_vec();
        let (l, m) = monotone_boundaries(&ray);
        lumen_end.push(l);
        media_end.push(m);
    }
    let present: Vec<bool> = lumen_end.iter().map(|&l| l > 0).collect();
    interpolate_missing(&mut lumen_end, &present);
    for (m, &l) in media_end.iter_mut().zip(&lumen_end) {
        *m = (*m).max(l);
    }
    let lumen_end = circular_median(&lumen_end);
    let media_end = circular_median(&media_end);

    LabelMap::new(Array2::from_shape_fn((n_rays, n_depth), |(s, d)| {
        if d < lumen_end[s] {
            Tissue::Lumen
        } else if d < media_end[s].max(lumen_end[s]) {
            Tissue::Media
        } else {
            Tissue::Externa
        }
    }))
}
