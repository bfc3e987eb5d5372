//! Distance-based tapers on a periodic one-dimensional grid of state
//! components.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Periodic separation between components `m` and `n` (zero-based) on a ring
/// of `d` components.
pub fn periodic_separation(m: usize, n: usize, d: usize) -> Result<usize> {
    if m >= d || n >= d {
        return Err(Error::arg(format!(
            "component index out of range: ({m}, {n}) with d = {d}"
        )));
    }
    let diff = m as i64 - n as i64;
    let d = d as i64;
    Ok([(diff - d).abs(), diff.abs(), (diff + d).abs()]
        .into_iter()
        .min()
        .unwrap() as usize)
}

/// Linear taper `1 - s / (2 r)` on `s <= 2 r`, zero beyond.
///
/// A zero radius keeps only the component itself.
pub fn taper(separation: usize, radius: f64) -> f64 {
    if radius == 0.0 {
        return if separation == 0 { 1.0 } else { 0.0 };
    }
    let ratio = separation as f64 / radius;
    if ratio <= 2.0 {
        1.0 - 0.5 * ratio
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalisationMatrix {
    radius: f64,
    values: Array2<f64>,
}

impl LocalisationMatrix {
    pub fn dimension(&self) -> usize {
        self.values.nrows()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[[m, n]]
    }

    /// Non-zero entries `(n, C[m, n])` of row `m`.
    pub fn support(&self, m: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .row(m)
            .into_iter()
            .copied()
            .enumerate()
            .filter(|&(_, c)| c != 0.0)
    }
}

/// Builds the `d x d` periodic localisation matrix of radius `radius`.
///
/// `radius = 0` gives the identity: every component is treated on its own.
/// An infinite radius gives the all-ones matrix.
pub fn localisation_matrix(d: usize, radius: f64) -> Result<LocalisationMatrix> {
    if d == 0 {
        return Err(Error::arg("localisation matrix needs d >= 1"));
    }
    if !(radius >= 0.0) {
        return Err(Error::arg(format!("localisation radius must be non-negative, got {radius}")));
    }
    let mut values = Array2::zeros((d, d));
    for m in 0..d {
        for n in 0..d {
            values[[m, n]] = taper(periodic_separation(m, n, d)?, radius);
        }
    }
    Ok(LocalisationMatrix { radius, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separation_examples() {
        assert_eq!(periodic_separation(0, 0, 40).unwrap(), 0);
        assert_eq!(periodic_separation(0, 39, 40).unwrap(), 1);
        assert_eq!(periodic_separation(2, 6, 40).unwrap(), 4);
        assert!(periodic_separation(40, 0, 40).is_err());
    }

    #[test]
    fn matrix_radius_one() {
        let c = localisation_matrix(5, 1.0).unwrap();
        assert_eq!(c.get(2, 2), 1.0);
        assert_eq!(c.get(2, 1), 0.5);
        assert_eq!(c.get(2, 3), 0.5);
        assert_eq!(c.get(2, 0), 0.0);
        assert_eq!(c.get(2, 4), 0.0);
        // periodic wrap
        assert_eq!(c.get(0, 4), 0.5);
    }

    #[test]
    fn zero_radius_is_identity() {
        let c = localisation_matrix(3, 0.0).unwrap();
        assert_eq!(c.values(), Array2::<f64>::eye(3).view());
    }

    #[test]
    fn infinite_radius_is_all_ones() {
        let c = localisation_matrix(6, f64::INFINITY).unwrap();
        assert!(c.values().iter().all(|&v| v == 1.0));
        assert!(localisation_matrix(6, f64::NAN).is_err());
    }

    #[test]
    fn single_component() {
        for r in [0.0, 0.3, 7.0] {
            let c = localisation_matrix(1, r).unwrap();
            assert_eq!(c.get(0, 0), 1.0);
        }
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(localisation_matrix(4, -1.0).is_err());
        assert!(localisation_matrix(4, f64::NAN).is_err());
        assert!(localisation_matrix(0, 1.0).is_err());
    }

    #[test]
    fn symmetric_bounded_and_compact() {
        for d in 1..12 {
            for r in [0.0, 0.5, 1.0, 2.5, 4.0] {
                let c = localisation_matrix(d, r).unwrap();
                for m in 0..d {
                    for n in 0..d {
                        let v = c.get(m, n);
                        assert_eq!(v, c.get(n, m));
                        assert!((0.0..=1.0).contains(&v));
                        let s = periodic_separation(m, n, d).unwrap() as f64;
                        if s >= 2.0 * r && s > 0.0 {
                            assert_eq!(v, 0.0);
                        }
                    }
                }
            }
        }
    }
}
