//! Bernstein beta basis densities `be(s | k, K − k + 1)` and their tensor
//! products on the unit square.
//!
//! Densities are evaluated in log space and exponentiated. At the interval
//! end points the polynomial factors are handled exactly (`0^0 = 1`), so
//! `be(0 | 1, K) = K` and `be(0 | k, ·) = 0` for `k > 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::quadtree::FactorFamily;
use crate::geometry::{BasisCache, Point};
use crate::special::{bernstein_cdf_all, ln_choose};

/// Basis index `(kx, ky)`, 1-based; `ky` is ignored in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    pub kx: usize,
    pub ky: usize,
    pub k: usize,
}

impl BasisIndex {
    pub fn new(kx: usize, ky: usize, k: usize) -> Result<Self> {
        if k == 0 || kx == 0 || ky == 0 || kx > k || ky > k {
            return Err(Error::IndexOutOfRange { kx, ky, k });
        }
        Ok(BasisIndex { kx, ky, k })
    }

    /// Row-major flat index `(kx − 1)·K + (ky − 1)`.
    pub fn flat(&self) -> usize {
        (self.kx - 1) * self.k + (self.ky - 1)
    }

    pub fn from_flat(flat: usize, k: usize) -> Self {
        BasisIndex {
            kx: flat / k + 1,
            ky: flat % k + 1,
            k,
        }
    }
}

/// Precomputed constants for the K-member Bernstein basis.
#[derive(Debug, Clone)]
pub struct BernsteinBasis {
    k: usize,
    /// `ln(K · C(K−1, k−1))`, the log normalizer of member k (index k − 1).
    ln_norm: Vec<f64>,
    /// `ln C(K, j)`, j = 0..=K, for the incomplete beta tails.
    ln_binom: Vec<f64>,
    /// Density at the mode of each member.
    peak: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "K must be at least 1");
        let ln_k = (k as f64).ln();
        let ln_norm: Vec<f64> = (1..=k).map(|j| ln_k + ln_choose(k - 1, j - 1)).collect();
        let ln_binom = (0..=k).map(|j| ln_choose(k, j)).collect();
        let mut basis = BernsteinBasis {
            k,
            ln_norm,
            ln_binom,
            peak: Vec::new(),
        };
        basis.peak = (1..=k).map(|j| basis.eval(basis.mode(j), j)).collect();
        basis
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mode of member `j`: `(j − 1)/(K − 1)`.
    pub fn mode(&self, j: usize) -> f64 {
        if self.k == 1 {
            0.5
        } else {
            (j - 1) as f64 / (self.k - 1) as f64
        }
    }

    /// `ln be(s | j, K − j + 1)`; `-inf` where the density is zero.
    pub fn ln_eval(&self, s: f64, j: usize) -> f64 {
        let a = (j - 1) as f64;
        let b = (self.k - j) as f64;
        let term = |e: f64, v: f64, lv: f64| {
            if e == 0.0 {
                0.0
            } else if v <= 0.0 {
                f64::NEG_INFINITY
            } else {
                e * lv
            }
        };
        let lx = if s > 0.0 { s.ln() } else { f64::NEG_INFINITY };
        let l1x = if s < 1.0 { (-s).ln_1p() } else { f64::NEG_INFINITY };
        self.ln_norm[j - 1] + term(a, s, lx) + term(b, 1.0 - s, l1x)
    }

    pub fn eval(&self, s: f64, j: usize) -> f64 {
        self.ln_eval(s, j).exp()
    }

    /// All K members at `s`, written to `out[j − 1]`.
    pub fn eval_all(&self, s: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eval(s, j + 1);
        }
    }

    pub fn ln_eval_all(&self, s: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.ln_eval(s, j + 1);
        }
    }

    /// `I_s(j, K − j + 1)` for every member.
    pub fn cdf_all(&self, s: f64, out: &mut [f64]) {
        let mut pmf = vec![0.0; self.k + 1];
        bernstein_cdf_all(self.k, s, &self.ln_binom, &mut pmf, out);
    }
}

impl FactorFamily for BernsteinBasis {
    fn len(&self) -> usize {
        self.k
    }

    fn masses(&self, a: f64, b: f64, out: &mut [f64]) {
        let mut ca = vec![0.0; self.k];
        self.cdf_all(a, &mut ca);
        self.cdf_all(b, out);
        for (o, c) in out.iter_mut().zip(&ca) {
            *o = (*o - c).max(0.0);
        }
    }

    fn values(&self, t: f64, out: &mut [f64]) {
        self.eval_all(t, out);
    }

    fn polynomial_degree(&self) -> Option<usize> {
        Some(self.k - 1)
    }

    fn ranges(&self, a: f64, b: f64, lo: &mut [f64], hi: &mut [f64]) {
        for j in 1..=self.k {
            let fa = self.eval(a, j);
            let fb = self.eval(b, j);
            let m = self.mode(j);
            lo[j - 1] = fa.min(fb);
            hi[j - 1] = if self.k > 1 && m >= a && m <= b {
                self.peak[j - 1]
            } else {
                fa.max(fb)
            };
        }
    }
}

/// Beta(k, K − k + 1) density at `s ∈ [0, 1]`.
pub fn beta_basis_1d(s: f64, k: usize, cap_k: usize) -> Result<f64> {
    if cap_k == 0 || k == 0 || k > cap_k {
        return Err(Error::IndexOutOfRange { kx: k, ky: 1, k: cap_k });
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidConfig(format!("s = {s} outside [0, 1]")));
    }
    Ok(BernsteinBasis::new(cap_k).eval(s, k))
}

/// Tensor-product basis density `φ_{kx,ky}(x, y)`.
pub fn phi(x: f64, y: f64, idx: BasisIndex) -> Result<f64> {
    Ok(beta_basis_1d(x, idx.kx, idx.k)? * beta_basis_1d(y, idx.ky, idx.k)?)
}

/// Basis density truncated to the cache's domain: `φ / B`.
pub fn phi_star(x: f64, y: f64, idx: BasisIndex, cache: &BasisCache) -> Result<f64> {
    if idx.k != cache.k() {
        return Err(Error::KMismatch {
            draw: idx.k,
            cache: cache.k(),
        });
    }
    let b = cache.b_at(idx);
    if b <= 0.0 {
        return Err(Error::EmptyBasisCell {
            kx: idx.kx,
            ky: idx.ky,
            k: idx.k,
        });
    }
    Ok(phi(x, y, idx)? / b)
}

/// Basis values for a batch of points. Row-major `n × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub k: usize,
    pub rows: usize,
    /// Column `c` corresponds to `columns[c]`: a 1-based member index in 1-D,
    /// a flat `(kx, ky)` index in 2-D.
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

impl BasisMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.columns.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, col: usize) -> f64 {
        self.values[i * self.columns.len() + col]
    }
}

/// `be(s_i | k, K − k + 1)` for all events and all k.
pub fn basis_matrix_1d(events: &[f64], k: usize) -> Result<BasisMatrix> {
    let basis = BernsteinBasis::new(k);
    let mut values = vec![0.0; events.len() * k];
    for (i, &s) in events.iter().enumerate() {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::EventOutOfRange(s));
        }
        basis.eval_all(s, &mut values[i * k..(i + 1) * k]);
    }
    Ok(BasisMatrix {
        k,
        rows: events.len(),
        columns: (1..=k).collect(),
        values,
    })
}

/// `φ_{kx,ky}(x_i, y_i)` over all K² indices (the untruncated basis).
pub fn basis_matrix_2d(points: &[Point], k: usize) -> Result<BasisMatrix> {
    let basis = BernsteinBasis::new(k);
    let k2 = k * k;
    let mut values = vec![0.0; points.len() * k2];
    let mut bx = vec![0.0; k];
    let mut by = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        if !in_unit_square(*p) {
            return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
        }
        basis.eval_all(p.x, &mut bx);
        basis.eval_all(p.y, &mut by);
        let row = &mut values[i * k2..(i + 1) * k2];
        for kx in 0..k {
            for ky in 0..k {
                row[kx * k + ky] = bx[kx] * by[ky];
            }
        }
    }
    Ok(BasisMatrix {
        k,
        rows: points.len(),
        columns: (0..k2).collect(),
        values,
    })
}

fn in_unit_square(p: Point) -> bool {
    (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)
}

/// `φ*_{kx,ky}(x_i, y_i) = φ / B` over the cache's index set `J`. Every point
/// must lie in the cache's domain.
pub fn truncated_basis_matrix(
    points: &[Point],
    cache: &BasisCache,
    domain: &crate::geometry::PolygonDomain,
) -> Result<BasisMatrix> {
    let k = cache.k();
    let basis = BernsteinBasis::new(k);
    let cols = cache.index_set().to_vec();
    let mut values = vec![0.0; points.len() * cols.len()];
    let mut bx = vec![0.0; k];
    let mut by = vec![0.0; k];
    for (i, p) in points.iter().enumerate() {
        if !domain.contains(*p) {
            return Err(Error::PointOutsideDomain { x: p.x, y: p.y });
        }
        basis.eval_all(p.x, &mut bx);
        basis.eval_all(p.y, &mut by);
        for (c, &flat) in cols.iter().enumerate() {
            let (kx, ky) = (flat / k, flat % k);
            values[i * cols.len() + c] = bx[kx] * by[ky] / cache.b()[flat];
        }
    }
    Ok(BasisMatrix {
        k,
        rows: points.len(),
        columns: cols,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_basis_cache, PolygonDomain, Rect};
    use proptest::prelude::*;

    #[test]
    fn uniform_when_k_is_one() {
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(beta_basis_1d(s, 1, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn modal_value_of_second_member() {
        // Beta(2, 19) at its mode 1/19
        let v = beta_basis_1d(1.0 / 19.0, 2, 20).unwrap();
        assert!((v - 7.56).abs() < 0.005, "{v}");
        let hand = 20.0 * (18.0f64 / 19.0).powi(18);
        assert!((v - hand).abs() < 1e-12);
    }

    #[test]
    fn endpoints_are_exact() {
        let b = BernsteinBasis::new(5);
        assert!((b.eval(0.0, 1) - 5.0).abs() < 1e-12);
        assert_eq!(b.eval(0.0, 2), 0.0);
        assert!((b.eval(1.0, 5) - 5.0).abs() < 1e-12);
        assert_eq!(b.eval(1.0, 4), 0.0);
    }

    #[test]
    fn binomial_identity() {
        for &k in &[5usize, 20, 50] {
            let b = BernsteinBasis::new(k);
            let mut out = vec![0.0; k];
            for i in 1..=9 {
                let s = i as f64 / 10.0;
                b.eval_all(s, &mut out);
                let m: f64 = out.iter().sum::<f64>() / k as f64;
                assert!((m - 1.0).abs() < 1e-12, "K={k} s={s}: {m}");
            }
        }
    }

    #[test]
    fn index_errors() {
        assert!(beta_basis_1d(0.5, 0, 3).is_err());
        assert!(beta_basis_1d(0.5, 4, 3).is_err());
        assert!(beta_basis_1d(1.5, 1, 3).is_err());
        assert!(BasisIndex::new(3, 1, 2).is_err());
    }

    #[test]
    fn phi_hand_values() {
        let idx = BasisIndex::new(1, 1, 2).unwrap();
        assert!((phi(0.5, 0.5, idx).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(phi(0.2, 0.9, BasisIndex::new(1, 1, 1).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn phi_star_on_half_rectangle() {
        let d = PolygonDomain::rectangle(Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        let cache = build_basis_cache(&d, 2, 1e-8).unwrap();
        let idx = BasisIndex::new(1, 1, 2).unwrap();
        // φ = 2(0.75)·2(0.5) = 1.5 and B = 0.75
        assert!((phi_star(0.25, 0.5, idx, &cache).unwrap() - 2.0).abs() < 1e-14);
        let sq = build_basis_cache(&PolygonDomain::unit_square(), 3, 1e-8).unwrap();
        let idx = BasisIndex::new(2, 3, 3).unwrap();
        assert_eq!(phi_star(0.3, 0.6, idx, &sq).unwrap(), phi(0.3, 0.6, idx).unwrap());
    }

    #[test]
    fn basis_matrices_match_pointwise() {
        let m = basis_matrix_1d(&[0.5], 1).unwrap();
        assert_eq!(m.values, vec![1.0]);

        let d = PolygonDomain::rectangle(Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        let cache = build_basis_cache(&d, 2, 1e-8).unwrap();
        let pts = [Point::new(0.25, 0.5), Point::new(0.1, 0.2), Point::new(0.5, 1.0)];
        let w = truncated_basis_matrix(&pts, &cache, &d).unwrap();
        // the domain covers only the kx = 1 column of cells
        assert_eq!(w.columns, vec![0, 1]);
        for (i, p) in pts.iter().enumerate() {
            for (c, &flat) in w.columns.iter().enumerate() {
                let idx = BasisIndex::from_flat(flat, 2);
                let direct = phi_star(p.x, p.y, idx, &cache).unwrap();
                assert_eq!(w.get(i, c), direct);
            }
        }
        // (0.1, 0.2), idx (1,1): φ = 2(0.9)·2(0.8) = 2.88, B = 0.75 → 3.84
        let col = w.columns.iter().position(|&f| f == 0).unwrap();
        assert!((w.get(1, col) - 3.84).abs() < 1e-13);
        // (0.5, 1.0), idx (1,2): φ = 2(0.5)·2(1.0) = 2, B = 0.75
        let col = w.columns.iter().position(|&f| f == 1).unwrap();
        assert!((w.get(2, col) - 2.0 / 0.75).abs() < 1e-13);

        let outside = truncated_basis_matrix(&[Point::new(0.7, 0.5)], &cache, &d);
        assert!(matches!(outside, Err(Error::PointOutsideDomain { .. })));
    }

    proptest! {
        #[test]
        fn identity_and_finiteness(s in 1e-12f64..(1.0 - 1e-12), k in 1usize..=200) {
            let b = BernsteinBasis::new(k);
            let mut out = vec![0.0; k];
            b.eval_all(s, &mut out);
            prop_assert!(out.iter().all(|v| v.is_finite() && *v >= 0.0));
            let mean = out.iter().sum::<f64>() / k as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }
    }
}
