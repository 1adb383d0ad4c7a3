//! SLIC over-segmentation: k-means in (L, a, b, y, x) space followed by
//! connectivity enforcement.

use std::collections::VecDeque;

use crate::error::{DiscError, Result};
use crate::grid::{Grid, RgbImage};
use crate::superpixel::lab::rgb_to_lab;
use crate::superpixel::Segmentation;

const ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    y: f64,
    x: f64,
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Grid of seed counts `(rows, cols)` whose product approximates `n_target`.
fn seed_grid(h: usize, w: usize, n_target: usize) -> (usize, usize) {
    let rows = ((n_target as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let cols = ((n_target as f64 / rows as f64).round() as usize).clamp(1, w);
    (rows, cols)
}

fn initial_centers(lab: &Grid<[f64; 3]>, rows: usize, cols: usize) -> Vec<Center> {
    let (h, w) = lab.dims();
    let gradient = |y: usize, x: usize| {
        let l = |yy: usize, xx: usize| lab.get(yy.min(h - 1), xx.min(w - 1));
        sq_dist(l(y, x + 1), l(y, x.saturating_sub(1)))
            + sq_dist(l(y + 1, x), l(y.saturating_sub(1), x))
    };
    let mut centers = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let cy = (((r as f64 + 0.5) * h as f64 / rows as f64) as usize).min(h - 1);
            let cx = (((c as f64 + 0.5) * w as f64 / cols as f64) as usize).min(w - 1);
            // move the seed to the lowest-gradient cell of its 3×3 neighbourhood
            let mut best = (gradient(cy, cx), cy, cx);
            for y in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for x in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(y, x);
                    if g < best.0 {
                        best = (g, y, x);
                    }
                }
            }
            centers.push(Center {
                lab: *lab.get(best.1, best.2),
                y: best.1 as f64,
                x: best.2 as f64,
            });
        }
    }
    centers
}

/// Over-segments `image` into roughly `n_target` connected superpixels.
pub fn segment(image: &RgbImage, n_target: usize, compactness: f64) -> Result<Segmentation> {
    let (h, w) = image.dims();
    if n_target == 0 {
        return Err(DiscError::InvalidArgument("n_target must be at least 1".into()));
    }
    if n_target > h * w {
        return Err(DiscError::InvalidArgument(format!(
            "n_target {n_target} exceeds the {} pixels of a {h}×{w} image",
            h * w
        )));
    }
    if !(compactness > 0.0) {
        return Err(DiscError::InvalidArgument("compactness must be positive".into()));
    }
    let lab = rgb_to_lab(image);
    let (rows, cols) = seed_grid(h, w, n_target);
    let step_y = h as f64 / rows as f64;
    let step_x = w as f64 / cols as f64;
    let spatial = (h as f64 * w as f64 / (rows * cols) as f64).sqrt();
    let spatial_weight = (compactness / spatial).powi(2);
    let mut centers = initial_centers(&lab, rows, cols);

    let mut labels = vec![usize::MAX; h * w];
    let mut dist = vec![f64::INFINITY; h * w];
    for _ in 0..ITERATIONS {
        labels.fill(usize::MAX);
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let y0 = (c.y - step_y).floor().max(0.0) as usize;
            let y1 = ((c.y + step_y).ceil() as usize).min(h - 1);
            let x0 = (c.x - step_x).floor().max(0.0) as usize;
            let x1 = ((c.x + step_x).ceil() as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let ds = (y as f64 - c.y).powi(2) + (x as f64 - c.x).powi(2);
                    let d = sq_dist(&lab.data()[i], &c.lab) + ds * spatial_weight;
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = k;
                    }
                }
            }
        }
        // pixels outside every search window fall back to a full search
        for i in 0..h * w {
            if labels[i] == usize::MAX {
                let (y, x) = ((i / w) as f64, (i % w) as f64);
                let mut best = (f64::INFINITY, 0);
                for (k, c) in centers.iter().enumerate() {
                    let ds = (y - c.y).powi(2) + (x - c.x).powi(2);
                    let d = sq_dist(&lab.data()[i], &c.lab) + ds * spatial_weight;
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                labels[i] = best.1;
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &k) in labels.iter().enumerate() {
            let p = &lab.data()[i];
            let a = &mut acc[k];
            a[0] += p[0];
            a[1] += p[1];
            a[2] += p[2];
            a[3] += (i / w) as f64;
            a[4] += (i % w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center {
                    lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]],
                    y: a[3] / a[5],
                    x: a[4] / a[5],
                };
            }
        }
    }

    let min_size = ((spatial * spatial) / 4.0).floor().max(1.0) as usize;
    let labels = enforce_connectivity(&labels, h, w, min_size);
    Segmentation::from_labels(Grid::new(h, w, labels)?)
}

/// Splits labels into 4-connected components and merges components smaller
/// than `min_size` into the neighbour they share the longest boundary with.
fn enforce_connectivity(labels: &[usize], h: usize, w: usize, min_size: usize) -> Vec<usize> {
    let n = h * w;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbors4(i, h, w) {
                if comp[j] == usize::MAX && labels[j] == labels[start] {
                    comp[j] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }

    // parent[c] is the component that c has been merged into
    let mut parent: Vec<usize> = (0..sizes.len()).collect();
    fn root(parent: &mut [usize], mut c: usize) -> usize {
        while parent[c] != c {
            parent[c] = parent[parent[c]];
            c = parent[c];
        }
        c
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (i, &c) in comp.iter().enumerate() {
        members[c].push(i);
    }
    for c in 0..sizes.len() {
        let rc = root(&mut parent, c);
        if sizes[rc] >= min_size || sizes.len() == 1 {
            continue;
        }
        let mut contacts: std::collections::BTreeMap<usize, usize> = Default::default();
        for &i in &members[rc] {
            for j in neighbors4(i, h, w) {
                let rj = root(&mut parent, comp[j]);
                if rj != rc {
                    *contacts.entry(rj).or_default() += 1;
                }
            }
        }
        let Some((&target, _)) = contacts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        else {
            continue;
        };
        parent[rc] = target;
        sizes[target] += sizes[rc];
        let moved = std::mem::take(&mut members[rc]);
        members[target].extend(moved);
    }

    let mut remap = vec![usize::MAX; sizes.len()];
    let mut next = 0;
    let mut out = vec![0; n];
    for i in 0..n {
        let r = root(&mut parent, comp[i]);
        if remap[r] == usize::MAX {
            remap[r] = next;
            next += 1;
        }
        out[i] = remap[r];
    }
    out
}

pub(crate) fn neighbors4(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (i / w, i % w);
    [
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
    ]
    .into_iter()
    .flatten()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(h: usize, w: usize) -> RgbImage {
        Grid::from_fn(h, w, |_, x| if x < w / 2 { [0.9, 0.1, 0.1] } else { [0.1, 0.2, 0.8] })
    }

    #[test]
    fn single_region() {
        let seg = segment(&halves(12, 12), 1, 10.0).unwrap();
        assert_eq!(seg.n_regions(), 1);
        assert!(seg.labels().data().iter().all(|&l| l == 0));
    }

    #[test]
    fn two_halves_never_mix() {
        for (h, w) in [(32, 32), (20, 30), (16, 40)] {
            let img = halves(h, w);
            let seg = segment(&img, 2, 10.0).unwrap();
            for r in 0..seg.n_regions() {
                let px = &seg.region_pixels()[r];
                let first = img.data()[px[0]];
                assert!(px.iter().all(|&i| img.data()[i] == first), "{h}×{w} region {r} mixes colors");
            }
        }
    }

    #[test]
    fn too_many_regions_requested() {
        assert!(segment(&halves(4, 4), 17, 10.0).is_err());
        assert!(segment(&halves(4, 4), 16, 10.0).is_ok());
    }

    #[test]
    fn connectivity_splits_and_merges() {
        // label 0 appears in two disconnected pieces; the single pixel of label 2 is tiny
        let labels = vec![
            0, 0, 1, 0, //
            0, 0, 1, 0, //
            1, 1, 1, 2, //
        ];
        let out = enforce_connectivity(&labels, 3, 4, 2);
        let distinct: std::collections::BTreeSet<_> = out.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert_ne!(out[0], out[3]);
        assert_eq!(out[11], out[10]);
    }
}
