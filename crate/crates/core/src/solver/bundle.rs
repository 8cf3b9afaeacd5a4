use nalgebra::Vector2;

use crate::ellicell::Ray;
use crate::error::{Error, Result};

/// The highest-scoring rays, at most one per source ellipsoid.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectedBundle {
    pub rays: Vec<Ray>,
    pub weights: Vec<f64>,
    pub matched_pixels: Vec<Vector2<f64>>,
    /// Positions of the selected rays in the input list.
    pub indices: Vec<usize>,
}

impl SelectedBundle {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

/// Greedy selection by descending score, skipping rays whose ellipsoid is
/// already represented, until `n_top` rays are kept. Equal scores go to the
/// lower ray index. Rays with non-positive scores are never kept.
pub fn select_top_rays(
    rays: &[Ray],
    scores: &[f64],
    pixel_of: impl Fn(usize) -> Vector2<f64>,
    n_top: usize,
) -> Result<SelectedBundle> {
    if n_top < 2 {
        return Err(Error::Config(format!("N_top must be at least 2, got {n_top}")));
    }
    if rays.len() != scores.len() {
        return Err(Error::Config(format!("{} rays but {} scores", rays.len(), scores.len())));
    }
    // The greedy pass keeps exactly the best ray of each ellipsoid, in
    // order of those maxima.
    let sources = rays.iter().map(|r| r.source as usize + 1).max().unwrap_or(0);
    let mut best: Vec<Option<usize>> = vec![None; sources];
    let better = |i: usize, j: usize| scores[i] > scores[j] || (scores[i] == scores[j] && i < j);
    for (i, r) in rays.iter().enumerate() {
        if !(scores[i] > 0.0) {
            continue;
        }
        let slot = &mut best[r.source as usize];
        if slot.is_none_or(|j| better(i, j)) {
            *slot = Some(i);
        }
    }
    let mut chosen: Vec<usize> = best.into_iter().flatten().collect();
    chosen.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    chosen.truncate(n_top);
    if chosen.len() < 2 {
        return Err(Error::InsufficientBundle(format!(
            "{} distinct ellipsoid(s) with positive score, need 2",
            chosen.len()
        )));
    }
    Ok(SelectedBundle {
        rays: chosen.iter().map(|&i| rays[i].clone()).collect(),
        weights: chosen.iter().map(|&i| scores[i]).collect(),
        matched_pixels: chosen.iter().map(|&i| pixel_of(i)).collect(),
        indices: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rgb;
    use nalgebra::Vector3;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ray(source: u32) -> Ray {
        Ray {
            origin: Vector3::new(source as f64, 0.0, 0.0),
            direction: Vector3::z(),
            color: Rgb::zeros(),
            source,
        }
    }

    fn no_pixel(_: usize) -> Vector2<f64> {
        Vector2::zeros()
    }

    #[test]
    fn single_source_is_insufficient() {
        let rays = [ray(0), ray(0), ray(0)];
        let err = select_top_rays(&rays, &[0.3, 0.2, 0.1], no_pixel, 10).unwrap_err();
        assert!(matches!(err, Error::InsufficientBundle(_)));
    }

    #[test]
    fn keeps_the_best_two() {
        let rays = [ray(0), ray(1), ray(2)];
        let b = select_top_rays(&rays, &[0.9, 0.8, 0.7], no_pixel, 2).unwrap();
        assert_eq!(b.indices, vec![0, 1]);
        assert_eq!(b.weights, vec![0.9, 0.8]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let rays = [ray(0), ray(1), ray(1), ray(2)];
        let b = select_top_rays(&rays, &[0.5, 0.5, 0.5, 0.5], no_pixel, 2).unwrap();
        assert_eq!(b.indices, vec![0, 1]);
    }

    fn greedy_reference(rays: &[Ray], scores: &[f64], n_top: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..rays.len()).collect();
        order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));
        let mut used = std::collections::HashSet::new();
        let mut kept = Vec::new();
        for i in order {
            if kept.len() == n_top {
                break;
            }
            if scores[i] > 0.0 && used.insert(rays[i].source) {
                kept.push(i);
            }
        }
        kept
    }

    #[test]
    fn matches_plain_greedy_and_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rays: Vec<Ray> = (0..1000).map(|_| ray(rng.random_range(0..300))).collect();
        let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let b = select_top_rays(&rays, &scores, |i| Vector2::new(i as f64, 0.0), 100).unwrap();
        assert_eq!(b.len(), 100);
        assert_eq!(b.indices, greedy_reference(&rays, &scores, 100));
        let sources: std::collections::HashSet<u32> = b.rays.iter().map(|r| r.source).collect();
        assert_eq!(sources.len(), 100);
        assert_eq!(b.matched_pixels[3].x, b.indices[3] as f64);

        let mut perm: Vec<usize> = (0..1000).collect();
        perm.shuffle(&mut rng);
        let rays2: Vec<Ray> = perm.iter().map(|&i| rays[i].clone()).collect();
        let scores2: Vec<f64> = perm.iter().map(|&i| scores[i]).collect();
        let b2 = select_top_rays(&rays2, &scores2, no_pixel, 100).unwrap();
        assert_eq!(b.weights, b2.weights);
    }

    #[test]
    fn zero_scores_are_skipped() {
        let rays = [ray(0), ray(1), ray(2)];
        assert!(select_top_rays(&rays, &[0.0, 0.0, 1.0], no_pixel, 5).is_err());
    }
}
