use crate::geometry::Point2;
use crate::imaging::GrayImage;

const MAX_ITERATIONS: usize = 50;

/// One cloud of matched features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub center: Point2,
    pub count: usize,
}

fn dist2(a: &Point2, b: &Point2) -> f64 {
    (a - b).norm_squared()
}

fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Farthest-point seeding: first seed is the point nearest the centroid,
/// each next seed maximizes its distance to the seeds already chosen.
/// Ties resolve to the lower index.
fn seed_centers(points: &[Point2], k: usize) -> Vec<Point2> {
    let c = centroid(points);
    let first = (0..points.len())
        .min_by(|&i, &j| dist2(&points[i], &c).total_cmp(&dist2(&points[j], &c)).then(i.cmp(&j)))
        .expect("non-empty");
    let mut seeds = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while seeds.len() < k {
        let (idx, &d) = nearest
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        if d == 0.0 {
            break;
        }
        let s = points[idx];
        seeds.push(s);
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(p, &s));
        }
    }
    seeds
}

fn assign(points: &[Point2], centers: &[Point2]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            (0..centers.len())
                .min_by(|&i, &j| dist2(p, &centers[i]).total_cmp(&dist2(p, &centers[j])).then(i.cmp(&j)))
                .expect("at least one center")
        })
        .collect()
}

/// Lloyd's k-means without merging. Returns centers and assignments;
/// empty clusters are dropped.
pub(crate) fn kmeans(points: &[Point2], k_max: usize) -> (Vec<Point2>, Vec<usize>) {
    let mut centers = seed_centers(points, k_max.max(1).min(points.len()));
    let mut labels = assign(points, &centers);
    for _ in 0..MAX_ITERATIONS {
        centers = (0..centers.len())
            .map(|c| {
                let members: Vec<Point2> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect();
                if members.is_empty() {
                    centers[c]
                } else {
                    centroid(&members)
                }
            })
            .collect();
        let next = assign(points, &centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    // Compact away empty clusters.
    let mut remap = vec![usize::MAX; centers.len()];
    let mut kept = Vec::new();
    for &l in &labels {
        if remap[l] == usize::MAX {
            remap[l] = 0;
        }
    }
    for (c, r) in remap.iter_mut().enumerate() {
        if *r != usize::MAX {
            *r = kept.len();
            kept.push(centers[c]);
        }
    }
    let labels = labels.into_iter().map(|l| remap[l]).collect();
    (kept, labels)
}

/// K-means over match positions followed by greedy merging of clusters
/// whose centers are closer than `merge_dist_px`.
pub fn cluster_matches(points: &[Point2], k_max: usize, merge_dist_px: f64) -> Vec<Cluster> {
    if points.is_empty() {
        return Vec::new();
    }
    let (centers, labels) = kmeans(points, k_max);
    let mut groups: Vec<Vec<Point2>> = vec![Vec::new(); centers.len()];
    for (p, &l) in points.iter().zip(&labels) {
        groups[l].push(*p);
    }
    loop {
        let mut closest: Option<(usize, usize, f64)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let d = (centroid(&groups[i]) - centroid(&groups[j])).norm();
                if d < merge_dist_px && closest.map_or(true, |(_, _, b)| d < b) {
                    closest = Some((i, j, d));
                }
            }
        }
        match closest {
            Some((i, j, _)) => {
                let moved = groups.remove(j);
                groups[i].extend(moved);
            }
            None => break,
        }
    }
    groups
        .iter()
        .map(|g| Cluster {
            center: centroid(g),
            count: g.len(),
        })
        .collect()
}

/// Crop around the best-supported cluster.
#[derive(Debug, Clone)]
pub struct Roi {
    pub center_px: Point2,
    pub half_extent_px: usize,
    pub feature_count: usize,
    pub crop: GrayImage,
    /// Top-left corner of `crop` in image pixels.
    pub origin: (usize, usize),
}

/// Picks the cluster with most members (ties: smaller y, then smaller x)
/// and crops around it. `None` when it has fewer than `min_features`.
pub fn select_roi(img: &GrayImage, clusters: &[Cluster], min_features: usize, half_extent_px: usize) -> Option<Roi> {
    let best = clusters.iter().min_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.center.y.total_cmp(&b.center.y))
            .then(a.center.x.total_cmp(&b.center.x))
    })?;
    if best.count < min_features {
        return None;
    }
    let side = 2 * half_extent_px + 1;
    let x0 = best.center.x.round() as isize - half_extent_px as isize;
    let y0 = best.center.y.round() as isize - half_extent_px as isize;
    let (crop, origin) = img.crop_clamped(x0, y0, side, side);
    Some(Roi {
        center_px: best.center,
        half_extent_px,
        feature_count: best.count,
        crop,
        origin,
    })
}
