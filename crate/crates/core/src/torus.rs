//! Geometry of the unit torus and a few deterministic reductions.

/// A point on the universal cover of the torus.
pub type Point = [f64; 2];

/// Representative of `d` modulo 1 in `[-1/2, 1/2]`.
#[inline]
pub fn wrap_signed(d: f64) -> f64 {
    d - d.round()
}

/// Representative of `x` modulo 1 in `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimum Euclidean distance over integer lattice translates.
#[inline]
pub fn torus_dist(a: Point, b: Point) -> f64 {
    wrap_signed(a[0] - b[0]).hypot(wrap_signed(a[1] - b[1]))
}

/// Distance on the universal cover.
#[inline]
pub fn cover_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Periodic offset of a lattice residue: `min(a, n - a)`.
#[inline]
pub fn lattice_offset(a: usize, n: usize) -> usize {
    let a = a % n;
    a.min(n - a)
}

/// Node coordinates of the grid point `(i, j)` at resolution `n`.
#[inline]
pub fn node(i: usize, j: usize, n: usize) -> Point {
    [i as f64 / n as f64, j as f64 / n as f64]
}

/// Pairwise summation with a fixed split order.
///
/// The tree is determined only by the slice length, so repeated calls are
/// bit-identical. Summing `2^m` copies of one value is exact.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values, |v| *v)
}

/// Pairwise sum of `f(x)` over a slice.
pub fn pairwise_sum_by<T>(values: &[T], f: impl Fn(&T) -> f64 + Copy) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => f(&values[0]),
        len => {
            let half = len / 2;
            pairwise_sum_by(&values[..half], f) + pairwise_sum_by(&values[half..], f)
        }
    }
}

/// Pairwise sum of `f(x)` taken in ascending order of the summands, so the
/// result depends only on the multiset of values.
pub fn canonical_sum_by<T>(values: &[T], f: impl Fn(&T) -> f64) -> f64 {
    let mut terms: Vec<f64> = values.iter().map(f).collect();
    terms.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_and_distance() {
        assert_eq!(wrap_unit(-0.25), 0.75);
        assert_eq!(wrap_unit(1.0), 0.0);
        assert!((wrap_signed(0.9) + 0.1).abs() < 1e-15);
        assert!((torus_dist([0.05, 0.0], [0.95, 0.0]) - 0.1).abs() < 1e-15);
        assert!((torus_dist([0.0, 0.0], [3.5, 0.5]) - 0.5f64.hypot(0.5)).abs() < 1e-15);
        assert_eq!(lattice_offset(7, 8), 1);
        assert_eq!(lattice_offset(4, 8), 4);
    }

    #[test]
    fn pairwise_sum_exact_for_power_of_two_copies() {
        let c = 0.1 + 0.2;
        let v = vec![c; 1 << 12];
        assert_eq!(pairwise_sum(&v) / 4096.0, c);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn canonical_sum_ignores_order() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 - 0.37).collect();
        let mut w = v.clone();
        w.rotate_left(123);
        assert_eq!(canonical_sum_by(&v, |x| *x), canonical_sum_by(&w, |x| *x));
    }
}
