//! Local area extraction: binarize a multi-source local radio map, label its connected
//! components and split it into one single-source map per component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::propagation::{Bitmap, MapKind, RadioMap};

/// Binarization threshold on the 0..=255 scale.
pub const DEFAULT_GAMMA: u8 = 127;
/// Area multiple of the nominal disk above which a component is reported as merged.
pub const DEFAULT_AREA_FACTOR: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::invalid(format!("connectivity must be 4 or 8, got {n}"))),
        }
    }

    /// Neighbors already visited in a row-major scan.
    fn causal_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0)],
            Connectivity::Eight => &[(0, -1), (-1, -1), (-1, 0), (-1, 1)],
        }
    }
}

/// A map holding only the values 0 and 255.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap(Grid<u8>);

impl BinaryMap {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        match grid.as_slice().iter().find(|&&v| v != 0 && v != 255) {
            Some(v) => Err(Error::invalid(format!("binary map holds value {v}"))),
            None => Ok(BinaryMap(grid)),
        }
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<u8> {
        self.0
    }

    pub fn as_bitmap(&self) -> Bitmap {
        RadioMap::new(MapKind::Binarized, self.0.clone())
    }
}

/// `255` where the pixel is strictly above `gamma`, `0` otherwise.
pub fn binarize(map: &Bitmap, gamma: u8) -> BinaryMap {
    BinaryMap(map.values.map(|&v| if v > gamma { 255 } else { 0 }))
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    fn point(row: usize, col: usize) -> Self {
        BBox {
            top: row,
            left: col,
            bottom: row,
            right: col,
        }
    }

    fn include(&mut self, row: usize, col: usize) {
        self.top = self.top.min(row);
        self.bottom = self.bottom.max(row);
        self.left = self.left.min(col);
        self.right = self.right.max(col);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: u32,
    pub area: usize,
    pub bbox: BBox,
    /// Value-weighted mean of the member pixel centers.
    pub centroid: Point,
}

/// A partition of the foreground into connected components.
///
/// Labels run from 1 in order of bounding box `(top, left)`, ties broken by the first
/// member pixel in raster order. Background is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub labels: Grid<u32>,
    pub components: Vec<Component>,
}

impl Labeling {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    /// Pixel coordinates of every member of component `id`.
    pub fn members(&self, id: u32) -> Vec<(usize, usize)> {
        self.labels
            .indexed()
            .filter(|(_, _, &l)| l == id)
            .map(|(r, c, _)| (r, c))
            .collect()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        // slot 0 is the background label
        DisjointSet { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels the nonzero pixels of `grid` (two-pass union-find).
///
/// Component stats are accumulated during the resolving pass. Centroids are weighted by
/// the pixel values, so a 0/255 input yields the geometric centroid.
pub fn label_foreground(grid: &Grid<u8>, connectivity: Connectivity) -> Labeling {
    let (w, h) = grid.dims();
    let mut provisional = Grid::filled(w, h, 0u32);
    let mut sets = DisjointSet::new();

    for row in 0..h {
        for col in 0..w {
            if *grid.get(row, col) == 0 {
                continue;
            }
            let mut label = 0u32;
            for &(dr, dc) in connectivity.causal_offsets() {
                let (nr, nc) = (row as isize + dr, col as isize + dc);
                if let Some(&n) = provisional.checked(nr, nc) {
                    if n == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = n;
                    } else if n != label {
                        sets.union(label, n);
                    }
                }
            }
            if label == 0 {
                label = sets.make();
            }
            provisional.set(row, col, label);
        }
    }

    struct Acc {
        first: usize,
        area: usize,
        bbox: BBox,
        sum_w: f64,
        sum_x: f64,
        sum_y: f64,
    }
    let mut root_slot: Vec<Option<usize>> = vec![None; sets.parent.len()];
    let mut accs: Vec<Acc> = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let p = *provisional.get(row, col);
            if p == 0 {
                continue;
            }
            let root = sets.find(p) as usize;
            let slot = *root_slot[root].get_or_insert_with(|| {
                accs.push(Acc {
                    first: row * w + col,
                    area: 0,
                    bbox: BBox::point(row, col),
                    sum_w: 0.0,
                    sum_x: 0.0,
                    sum_y: 0.0,
                });
                accs.len() - 1
            });
            let a = &mut accs[slot];
            let v = *grid.get(row, col) as f64;
            a.area += 1;
            a.bbox.include(row, col);
            a.sum_w += v;
            a.sum_x += v * (col as f64 + 0.5);
            a.sum_y += v * (row as f64 + 0.5);
            provisional.set(row, col, slot as u32 + 1);
        }
    }

    let mut order: Vec<usize> = (0..accs.len()).collect();
    order.sort_by_key(|&k| (accs[k].bbox.top, accs[k].bbox.left, accs[k].first));
    let mut final_id = vec![0u32; accs.len()];
    for (rank, &k) in order.iter().enumerate() {
        final_id[k] = rank as u32 + 1;
    }
    let labels = provisional.map(|&s| if s == 0 { 0 } else { final_id[s as usize - 1] });
    let components = order
        .iter()
        .map(|&k| {
            let a = &accs[k];
            Component {
                id: final_id[k],
                area: a.area,
                bbox: a.bbox,
                centroid: Point::new(a.sum_x / a.sum_w, a.sum_y / a.sum_w),
            }
        })
        .collect();
    Labeling { labels, components }
}

pub fn connected_components(bin: &BinaryMap, connectivity: Connectivity) -> Labeling {
    label_foreground(bin.grid(), connectivity)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub single_source_maps: Vec<Bitmap>,
    pub labeling: Labeling,
    pub merged_flags: Vec<bool>,
}

impl SeparationResult {
    pub fn count(&self) -> usize {
        self.single_source_maps.len()
    }
}

/// Multiplies each component mask into the multi-source map.
///
/// Map `m` equals `ims` on component `m` and 0 elsewhere. Merged flags start cleared;
/// see [`flag_merged`].
pub fn extract_single_source_maps(ims: &Bitmap, labeling: &Labeling) -> Result<SeparationResult> {
    if !ims.values.same_dims(&labeling.labels) {
        return Err(Error::invalid("labeling and map dimensions differ"));
    }
    let (w, h) = ims.values.dims();
    let mut maps: Vec<Grid<u8>> = vec![Grid::filled(w, h, 0); labeling.count()];
    for (row, col, &label) in labeling.labels.indexed() {
        if label > 0 {
            maps[label as usize - 1].set(row, col, *ims.values.get(row, col));
        }
    }
    Ok(SeparationResult {
        single_source_maps: maps
            .into_iter()
            .map(|g| RadioMap::new(MapKind::SingleSource, g))
            .collect(),
        labeling: labeling.clone(),
        merged_flags: vec![false; labeling.count()],
    })
}

/// Number of integer offsets `(dx, dy)` with `dx^2 + dy^2 <= r^2`.
pub fn expected_disk_area(r: f64) -> usize {
    let k = r.floor() as i64;
    let r2 = r * r;
    (-k..=k)
        .flat_map(|dy| (-k..=k).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2)
        .count()
}

/// Flags components whose area exceeds `area_factor` times the nominal disk area.
pub fn flag_merged(labeling: &Labeling, r: f64, area_factor: f64) -> Result<Vec<bool>> {
    if !(r > 0.0) {
        return Err(Error::invalid("r must be positive"));
    }
    let limit = area_factor * expected_disk_area(r) as f64;
    Ok(labeling
        .components
        .iter()
        .map(|c| c.area as f64 > limit)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationParams {
    pub gamma: u8,
    pub connectivity: Connectivity,
    pub r: f64,
    pub area_factor: f64,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams {
            gamma: DEFAULT_GAMMA,
            connectivity: Connectivity::Eight,
            r: 2.0,
            area_factor: DEFAULT_AREA_FACTOR,
        }
    }
}

/// Binarize, label, extract and flag in one call.
pub fn separate(ims: &Bitmap, params: &SeparationParams) -> Result<SeparationResult> {
    let bin = binarize(ims, params.gamma);
    let labeling = connected_components(&bin, params.connectivity);
    let mut result = extract_single_source_maps(ims, &labeling)?;
    result.merged_flags = flag_merged(&labeling, params.r, params.area_factor)?;
    Ok(result)
}
