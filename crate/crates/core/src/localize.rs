//! Sub-pixel position estimates on single-source local maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::propagation::Bitmap;
use crate::separation::SeparationResult;

/// Maps a single-source bitmap to a position in meters.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn estimate(&self, map: &Bitmap) -> Result<Point>;
}

fn no_source() -> Error {
    Error::Empty("map has no nonzero pixel")
}

/// Brightest pixel as `(row, col)`; ties go to the smallest row, then column.
fn argmax_cell(map: &Bitmap) -> Result<(usize, usize)> {
    let mut best: Option<(usize, usize, u8)> = None;
    for (r, c, &v) in map.values.indexed() {
        if v > 0 && best.is_none_or(|(_, _, b)| v > b) {
            best = Some((r, c, v));
        }
    }
    best.map(|(r, c, _)| (r, c)).ok_or_else(no_source)
}

pub fn argmax_estimate(map: &Bitmap) -> Result<Point> {
    argmax_cell(map).map(|(r, c)| Point::cell_center(r, c))
}

/// Intensity-weighted centroid of all nonzero pixel centers.
pub fn center_of_mass(map: &Bitmap) -> Result<Point> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (r, c, &v) in map.values.indexed() {
        if v > 0 {
            let w = v as f64;
            sw += w;
            sx += w * (c as f64 + 0.5);
            sy += w * (r as f64 + 0.5);
        }
    }
    if sw == 0.0 {
        return Err(no_source());
    }
    Ok(Point::new(sx / sw, sy / sw))
}

/// Weighted centroid of the brightest pixel and its four edge neighbors.
pub fn four_neighborhood_refine(map: &Bitmap) -> Result<Point> {
    let (r, c) = argmax_cell(map)?;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (dr, dc) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if let Some(&v) = map.values.checked(nr, nc) {
            let w = v as f64;
            sw += w;
            sx += w * (nc as f64 + 0.5);
            sy += w * (nr as f64 + 0.5);
        }
    }
    Ok(Point::new(sx / sw, sy / sw))
}

macro_rules! fn_estimator {
    ($ty:ident, $name:literal, $f:ident) => {
        #[derive(Debug, Clone, Copy, Default)]
        pub struct $ty;

        impl Estimator for $ty {
            fn name(&self) -> &str {
                $name
            }

            fn estimate(&self, map: &Bitmap) -> Result<Point> {
                $f(map)
            }
        }
    };
}

fn_estimator!(ArgMax, "argmax", argmax_estimate);
fn_estimator!(CenterOfMass, "center-of-mass", center_of_mass);
fn_estimator!(FourNeighborhood, "four-neighborhood", four_neighborhood_refine);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub component_id: u32,
    pub position: Point,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub predictions: Vec<Prediction>,
}

impl PredictionSet {
    pub fn points(&self) -> Vec<Point> {
        self.predictions.iter().map(|p| p.position).collect()
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn flagged_count(&self) -> usize {
        self.predictions.iter().filter(|p| p.flagged).count()
    }
}

/// One estimate per separated component; merged components keep their flag.
pub fn localize_all(separation: &SeparationResult, estimator: &dyn Estimator) -> Result<PredictionSet> {
    let predictions = separation
        .single_source_maps
        .iter()
        .zip(&separation.labeling.components)
        .zip(&separation.merged_flags)
        .map(|((map, comp), &flagged)| {
            Ok(Prediction {
                component_id: comp.id,
                position: estimator.estimate(map)?,
                flagged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet { predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::propagation::{ground_truth_local, BitmapEncoding, MapKind, PropagationParams, RadioMap};
    use crate::scenario::{BuildingLayout, Scenario, Source};
    use crate::separation::{separate, SeparationParams};
    use proptest::prelude::*;

    fn map_with(w: usize, h: usize, px: &[(usize, usize, u8)]) -> Bitmap {
        let mut g = Grid::filled(w, h, 0u8);
        for &(r, c, v) in px {
            g.set(r, c, v);
        }
        RadioMap::new(MapKind::SingleSource, g)
    }

    #[test]
    fn argmax_convention_and_ties() {
        let m = map_with(30, 30, &[(20, 10, 250), (5, 5, 100)]);
        assert_eq!(argmax_estimate(&m).unwrap(), Point::new(10.5, 20.5));
        let tie = map_with(10, 10, &[(7, 1, 200), (3, 8, 200)]);
        assert_eq!(argmax_estimate(&tie).unwrap(), Point::new(8.5, 3.5));
        assert!(argmax_estimate(&map_with(4, 4, &[])).is_err());
    }

    #[test]
    fn center_of_mass_examples() {
        let m = map_with(4, 1, &[(0, 0, 1), (0, 1, 3)]);
        assert_eq!(center_of_mass(&m).unwrap().x, 1.25);
        assert!(center_of_mass(&map_with(4, 4, &[])).is_err());

        let sc = Scenario::new(
            "c",
            BuildingLayout::empty(21, 21).unwrap(),
            vec![Source::at(Point::new(10.5, 10.5))],
            0,
            5.0,
        )
        .unwrap();
        let local = ground_truth_local(&sc, &PropagationParams::default(), 2.0, &BitmapEncoding::default()).unwrap();
        assert_eq!(center_of_mass(&local).unwrap(), Point::new(10.5, 10.5));
    }

    #[test]
    fn center_of_mass_subpixel_sweep_within_a_meter() {
        let layout = BuildingLayout::empty(21, 21).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                let truth = Point::new(10.0 + i as f64 / 20.0 + 0.025, 10.0 + j as f64 / 20.0 + 0.025);
                let sc = Scenario::new("s", layout.clone(), vec![Source::at(truth)], 0, 5.0).unwrap();
                let local =
                    ground_truth_local(&sc, &PropagationParams::default(), 2.0, &BitmapEncoding::default()).unwrap();
                worst = worst.max(center_of_mass(&local).unwrap().distance(&truth));
            }
        }
        assert!(worst <= 1.0, "worst error {worst}");
    }

    #[test]
    fn four_neighborhood_examples() {
        let sym = map_with(5, 5, &[(2, 2, 200), (1, 2, 80), (3, 2, 80), (2, 1, 80), (2, 3, 80)]);
        assert_eq!(four_neighborhood_refine(&sym).unwrap(), Point::new(2.5, 2.5));

        let skew = map_with(5, 5, &[(2, 2, 200), (2, 3, 100), (2, 1, 50), (1, 2, 75), (3, 2, 75)]);
        let p = four_neighborhood_refine(&skew).unwrap();
        assert!((p.x - 2.6).abs() < 1e-12);
        assert!((p.y - 2.5).abs() < 1e-12);

        // neighbors off the map contribute nothing
        let corner = map_with(3, 3, &[(0, 0, 100), (0, 1, 100)]);
        assert_eq!(four_neighborhood_refine(&corner).unwrap(), Point::new(1.0, 0.5));
    }

    proptest! {
        #[test]
        fn refinement_stays_within_half_meter(
            px in 1u8..=255, n in 0u8..=255, s in 0u8..=255, w in 0u8..=255, e in 0u8..=255,
        ) {
            let (n, s, w, e) = (n.min(px), s.min(px), w.min(px), e.min(px));
            let m = map_with(5, 5, &[(2, 2, px), (1, 2, n), (3, 2, s), (2, 1, w), (2, 3, e)]);
            let p = four_neighborhood_refine(&m).unwrap();
            let peak = argmax_estimate(&m).unwrap();
            prop_assert!((p.x - peak.x).abs() <= 0.5 && (p.y - peak.y).abs() <= 0.5);
        }

        #[test]
        fn estimators_translate_with_the_map(
            px in proptest::collection::vec((0usize..6, 0usize..6, 1u8..=255), 1..12),
            di in 0usize..8, dj in 0usize..8,
        ) {
            let a = map_with(16, 16, &px);
            let shifted: Vec<_> = px.iter().map(|&(r, c, v)| (r + di, c + dj, v)).collect();
            let b = map_with(16, 16, &shifted);
            for f in [argmax_estimate, center_of_mass, four_neighborhood_refine] {
                let (pa, pb) = (f(&a).unwrap(), f(&b).unwrap());
                prop_assert!((pb.x - pa.x - dj as f64).abs() < 1e-9);
                prop_assert!((pb.y - pa.y - di as f64).abs() < 1e-9);
            }
        }

        #[test]
        fn center_of_mass_inside_support_box(
            px in proptest::collection::vec((0usize..10, 0usize..10, 1u8..=255), 1..20),
        ) {
            let m = map_with(10, 10, &px);
            let p = center_of_mass(&m).unwrap();
            let nz: Vec<_> = m.values.indexed().filter(|(_, _, &v)| v > 0).collect();
            let (xmin, xmax) = nz.iter().fold((f64::MAX, f64::MIN), |(lo, hi), (_, c, _)| (lo.min(*c as f64 + 0.5), hi.max(*c as f64 + 0.5)));
            let (ymin, ymax) = nz.iter().fold((f64::MAX, f64::MIN), |(lo, hi), (r, _, _)| (lo.min(*r as f64 + 0.5), hi.max(*r as f64 + 0.5)));
            prop_assert!(p.x >= xmin - 1e-9 && p.x <= xmax + 1e-9 && p.y >= ymin - 1e-9 && p.y <= ymax + 1e-9);
        }
    }

    #[test]
    fn localize_all_counts() {
        let empty = separate(&map_with(10, 10, &[]), &SeparationParams::default()).unwrap();
        assert!(localize_all(&empty, &CenterOfMass).unwrap().is_empty());

        let three = map_with(30, 10, &[(2, 2, 220), (2, 12, 220), (2, 22, 220)]);
        let sep = separate(&three, &SeparationParams::default()).unwrap();
        let preds = localize_all(&sep, &ArgMax).unwrap();
        assert_eq!(preds.len(), 3);
        assert_eq!(preds.predictions[1].position, Point::new(12.5, 2.5));
        assert_eq!(preds.flagged_count(), 0);
    }

    #[test]
    fn merged_pair_gives_one_flagged_prediction() {
        let sc = Scenario::new(
            "m",
            BuildingLayout::empty(30, 30).unwrap(),
            vec![Source::at(Point::new(12.3, 14.1)), Source::at(Point::new(15.3, 14.1))],
            0,
            2.0,
        )
        .unwrap();
        let local = ground_truth_local(&sc, &PropagationParams::default(), 2.0, &BitmapEncoding::default()).unwrap();
        let sep = separate(&local, &SeparationParams::default()).unwrap();
        let preds = localize_all(&sep, &CenterOfMass).unwrap();
        assert_eq!(preds.len(), 1);
        assert!(preds.predictions[0].flagged);
    }
}
