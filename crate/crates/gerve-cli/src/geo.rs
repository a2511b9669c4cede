//! Coordinate normalisation and background padding for the spatial
//! hotspot workflow.

use anyhow::{bail, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

use gerve_core::mixture::Domain;
use gerve_core::points::Points;
use gerve_core::seed;

/// Aspect-preserving affine map from a data window onto a centred
/// rectangle: one shared scale per axis pair, plus a centring offset. The
/// inverse is stored alongside for reporting in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalisationTransform {
    /// Shared scale (working units per data unit).
    pub scale: f64,
    /// Window centre in data units.
    pub centre: [f64; 2],
    /// Half-extent of the normalised rectangle per axis.
    pub half_extent: [f64; 2],
    /// The (possibly aspect-expanded) window this transform was built from.
    pub window_lower: [f64; 2],
    pub window_upper: [f64; 2],
}

impl NormalisationTransform {
    pub fn apply(&self, x: &[f64]) -> [f64; 2] {
        [(x[0] - self.centre[0]) * self.scale, (x[1] - self.centre[1]) * self.scale]
    }

    pub fn invert(&self, y: &[f64]) -> [f64; 2] {
        [y[0] / self.scale + self.centre[0], y[1] / self.scale + self.centre[1]]
    }

    /// Normalised rectangle as a domain.
    pub fn rectangle(&self) -> Domain {
        Domain::new(
            vec![-self.half_extent[0], -self.half_extent[1]],
            vec![self.half_extent[0], self.half_extent[1]],
        )
        .expect("positive half extents")
    }
}

/// Builds the transform mapping `window` into a centred rectangle of area
/// ≈ 1 and applies it to the points.
///
/// With `target = None` the rectangle has exactly the window's aspect
/// ratio and unit area. With an explicit `target = (w, h)` the window is
/// first expanded symmetrically about its centre to the target aspect so
/// that one shared scale maps it exactly onto `[-w/2, w/2] × [-h/2, h/2]`.
pub fn normalise(
    points: &Points,
    window: Option<([f64; 2], [f64; 2])>,
    target: Option<[f64; 2]>,
) -> Result<(Points, NormalisationTransform)> {
    if points.dim() != 2 {
        bail!("normalisation expects 2-D points, got dimension {}", points.dim());
    }
    let (lower, upper) = match window {
        Some((l, u)) => (l.to_vec(), u.to_vec()),
        None => points.bounding_box()?,
    };
    let (mut w, mut h) = (upper[0] - lower[0], upper[1] - lower[1]);
    if !(w > 0.0 && h > 0.0) {
        bail!("window has zero extent: {w} × {h}");
    }
    let centre = [(lower[0] + upper[0]) / 2.0, (lower[1] + upper[1]) / 2.0];
    let (tw, th) = match target {
        Some([tw, th]) => {
            if !(tw > 0.0 && th > 0.0) {
                bail!("target rectangle must have positive extents");
            }
            // Expand the window minimally about its centre to the target
            // aspect ratio, so one shared scale lands exactly on the target.
            let aspect = tw / th;
            if w / h < aspect {
                w = h * aspect;
            } else {
                h = w / aspect;
            }
            (tw, th)
        }
        None => {
            // Unit-area rectangle with the window's own aspect ratio.
            let s = 1.0 / (w * h).sqrt();
            (w * s, h * s)
        }
    };
    let scale = tw / w;
    let transform = NormalisationTransform {
        scale,
        centre,
        half_extent: [tw / 2.0, th / 2.0],
        window_lower: [centre[0] - w / 2.0, centre[1] - h / 2.0],
        window_upper: [centre[0] + w / 2.0, centre[1] + h / 2.0],
    };
    let mut out = Points::with_dim(2);
    for row in points.rows() {
        out.push_row(&transform.apply(row));
    }
    Ok((out, transform))
}

/// Appends `M` uniform background points in `outer ∖ inner`, where
/// `M = round(density_ratio · (N / area(inner)) · (area(outer) − area(inner)))`,
/// drawn by rejection sampling from `outer`. Original rows are untouched;
/// the number of appended rows is returned.
pub fn pad_background(
    points: &Points,
    inner: &Domain,
    outer: &Domain,
    density_ratio: f64,
    seed_value: u64,
) -> Result<(Points, usize)> {
    if inner.dim() != 2 || outer.dim() != 2 || points.dim() != 2 {
        bail!("background padding is 2-D");
    }
    for i in 0..2 {
        if inner.lower()[i] < outer.lower()[i] || inner.upper()[i] > outer.upper()[i] {
            bail!("inner domain must lie inside the outer domain");
        }
    }
    if density_ratio < 0.0 {
        bail!("density_ratio must be ≥ 0");
    }
    let area_in = inner.volume();
    let area_out = outer.volume();
    let m = (density_ratio * points.len() as f64 / area_in * (area_out - area_in)).round() as usize;
    let mut out = points.clone();
    if m == 0 {
        return Ok((out, 0));
    }
    let mut rng = seed::rng(seed::derive(seed_value, seed::tags::GENERATE));
    let mut appended = 0usize;
    while appended < m {
        let x = rng.gen_range(outer.lower()[0]..outer.upper()[0]);
        let y = rng.gen_range(outer.lower()[1]..outer.upper()[1]);
        if !inner.contains(&[x, y]) {
            out.push_row(&[x, y]);
            appended += 1;
        }
    }
    Ok((out, m))
}

/// Metres per working unit per axis for an equirectangular local
/// projection at the window centroid; a coarse EPSG-free approximation for
/// longitude/latitude windows (sub-percent distortion over city-scale
/// extents).
pub fn equirectangular_metres_per_unit(transform: &NormalisationTransform) -> [f64; 2] {
    let lat0 = (transform.window_lower[1] + transform.window_upper[1]) / 2.0;
    let m_per_deg_lat = 111_132.0;
    let m_per_deg_lon = 111_320.0 * lat0.to_radians().cos();
    [m_per_deg_lon / transform.scale, m_per_deg_lat / transform.scale]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn london_window_maps_onto_paper_rectangle() {
        let pts = Points::from_rows(&[vec![-0.54, 51.28], vec![0.33, 51.70], vec![0.0, 51.5]]).unwrap();
        let (mapped, t) = normalise(
            &pts,
            Some(([-0.54, 51.28], [0.33, 51.70])),
            Some([1.4, 0.7]),
        )
        .unwrap();
        assert!((t.half_extent[0] - 0.7).abs() < 1e-12);
        assert!((t.half_extent[1] - 0.35).abs() < 1e-12);
        // Window corners land exactly on ±0.7 in x; y is inside after the
        // aspect expansion.
        assert_relative_eq!(mapped.row(0)[0], -0.7, epsilon = 1e-6);
        assert_relative_eq!(mapped.row(1)[0], 0.7, epsilon = 1e-6);
        assert!(mapped.row(0)[1] >= -0.35 - 1e-9 && mapped.row(1)[1] <= 0.35 + 1e-9);
        // Area of the target rectangle ≈ 1.
        let area = 4.0 * t.half_extent[0] * t.half_extent[1];
        assert_relative_eq!(area, 0.98, epsilon = 1e-12);
    }

    #[test]
    fn unit_square_maps_to_centred_unit_square() {
        let pts = Points::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let (mapped, t) = normalise(&pts, Some(([0.0, 0.0], [1.0, 1.0])), None).unwrap();
        assert_eq!(t.half_extent, [0.5, 0.5]);
        assert_eq!(mapped.row(0), &[-0.5, -0.5]);
        assert_eq!(mapped.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn round_trips_through_the_inverse() {
        let pts = Points::from_rows(&[vec![-0.2, 51.4], vec![0.25, 51.66], vec![0.01, 51.33]]).unwrap();
        let (mapped, t) = normalise(&pts, Some(([-0.54, 51.28], [0.33, 51.70])), Some([1.4, 0.7])).unwrap();
        for (orig, m) in pts.rows().zip(mapped.rows()) {
            let back = t.invert(m);
            assert_relative_eq!(back[0], orig[0], epsilon = 1e-12);
            assert_relative_eq!(back[1], orig[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn padding_count_matches_formula() {
        let rows: Vec<Vec<f64>> = (0..6000)
            .map(|i| vec![(i % 100) as f64 / 100.0 - 0.5, (i / 100) as f64 / 60.0 - 0.5])
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        let inner = Domain::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap();
        let outer = Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let (padded, m) = pad_background(&pts, &inner, &outer, 1e-3, 7).unwrap();
        assert_eq!(m, 90); // round(6000 · 15 / 1000)
        assert_eq!(padded.len(), 6090);
        // No padded point inside the inner box; originals untouched.
        for i in 6000..6090 {
            assert!(!inner.contains(padded.row(i)));
            assert!(outer.contains(padded.row(i)));
        }
        for i in 0..6000 {
            assert_eq!(padded.row(i), pts.row(i));
        }
    }

    #[test]
    fn zero_ratio_pads_nothing() {
        let pts = Points::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let inner = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let outer = Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let (padded, m) = pad_background(&pts, &inner, &outer, 0.0, 7).unwrap();
        assert_eq!(m, 0);
        assert_eq!(padded.len(), 1);
    }
}
