//! Per-K domain constants: basis normalizers `B`, cell intersection areas
//! `|S*|` and the index set `J` of cells that meet the domain.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::quadtree::{integrate_products, QuadratureSettings, Region};
use super::{PolygonDomain, Rect};
use crate::basis::{BasisIndex, BernsteinBasis};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_DEPTH: u32 = 16;

#[derive(Debug, Clone)]
pub struct BasisCache {
    k: usize,
    b: Vec<f64>,
    cell_area: Vec<f64>,
    cell_bbox: Vec<Option<Rect>>,
    index_set: Vec<usize>,
    domain_area: f64,
    tol: f64,
}

impl BasisCache {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `B_{kx,ky}` row-major over `(kx, ky)`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_at(&self, idx: BasisIndex) -> f64 {
        self.b[idx.flat()]
    }

    /// `|S*_{kx,ky}|` row-major.
    pub fn cell_area(&self) -> &[f64] {
        &self.cell_area
    }

    /// Bounding box of `S*` for a flat index in `J`.
    pub fn cell_bbox(&self, flat: usize) -> Option<Rect> {
        self.cell_bbox[flat]
    }

    /// Flat indices with positive cell area, ascending.
    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    pub fn in_index_set(&self, flat: usize) -> bool {
        self.cell_area[flat] > 0.0
    }

    pub fn domain_area(&self) -> f64 {
        self.domain_area
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn export(&self) -> CacheExport {
        CacheExport {
            k: self.k,
            b: self.b.clone(),
            cell_area: self.cell_area.clone(),
            tol: self.tol,
        }
    }
}

/// JSON form of a cache: row-major tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheExport {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "cellArea")]
    pub cell_area: Vec<f64>,
    pub tol: f64,
}

/// Builds the cache with the default recursion limit.
pub fn build_basis_cache(domain: &PolygonDomain, k: usize, tol: f64) -> Result<BasisCache> {
    build_basis_cache_with_depth(domain, k, tol, DEFAULT_MAX_DEPTH)
}

pub fn build_basis_cache_with_depth(
    domain: &PolygonDomain,
    k: usize,
    tol: f64,
    max_depth: u32,
) -> Result<BasisCache> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {tol}")));
    }
    let basis = BernsteinBasis::new(k);
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|kx| (0..k).map(move |ky| (kx, ky)))
        .collect();
    let b = integrate_products(
        domain,
        Rect::UNIT,
        &basis,
        &basis,
        &pairs,
        QuadratureSettings { tol, max_depth },
    )?;

    let mut cell_area = vec![0.0; k * k];
    let mut cell_bbox = vec![None; k * k];
    let mut index_set = Vec::new();
    for kx in 1..=k {
        for ky in 1..=k {
            let flat = (kx - 1) * k + (ky - 1);
            let region = Region::new(domain, Rect::grid_cell(kx, ky, k));
            if !region.is_empty() {
                cell_area[flat] = region.area();
                cell_bbox[flat] = region.bbox();
                index_set.push(flat);
            }
        }
    }
    Ok(BasisCache {
        k,
        b,
        cell_area,
        cell_bbox,
        index_set,
        domain_area: domain.area(),
        tol,
    })
}

/// Lazily built, memoized caches for a fixed domain across several K.
#[derive(Debug)]
pub struct CacheStore {
    domain: Arc<PolygonDomain>,
    tol: f64,
    caches: Mutex<BTreeMap<usize, Arc<BasisCache>>>,
}

impl CacheStore {
    pub fn new(domain: Arc<PolygonDomain>, tol: f64) -> Self {
        CacheStore {
            domain,
            tol,
            caches: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn domain(&self) -> &PolygonDomain {
        &self.domain
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn get(&self, k: usize) -> Result<Arc<BasisCache>> {
        if let Some(c) = self.caches.lock().expect("cache lock").get(&k) {
            return Ok(Arc::clone(c));
        }
        let built = Arc::new(build_basis_cache(&self.domain, k, self.tol)?);
        let mut map = self.caches.lock().expect("cache lock");
        Ok(Arc::clone(map.entry(k).or_insert(built)))
    }

    /// Builds every K in `ks` (in parallel) that is not cached yet.
    pub fn warm(&self, ks: impl IntoIterator<Item = usize>) -> Result<()> {
        use rayon::prelude::*;
        let missing: Vec<usize> = {
            let map = self.caches.lock().expect("cache lock");
            ks.into_iter().filter(|k| !map.contains_key(k)).collect()
        };
        let built: Vec<(usize, Result<BasisCache>)> = missing
            .par_iter()
            .map(|&k| (k, build_basis_cache(&self.domain, k, self.tol)))
            .collect();
        let mut map = self.caches.lock().expect("cache lock");
        for (k, c) in built {
            map.entry(k).or_insert(Arc::new(c?));
        }
        Ok(())
    }
}
