//! Per-lesion instance extraction from a multi-lesion mask.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{BBox, BinaryMask};
use crate::rle::Rle;

/// Annotated lesion type. Id 0 is background and never annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum LesionClass {
    Exudate = 1,
    Microaneurysm = 2,
}

impl LesionClass {
    pub const ALL: [LesionClass; 2] = [LesionClass::Exudate, LesionClass::Microaneurysm];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn name(self) -> &'static str {
        match self {
            LesionClass::Exudate => "exudate",
            LesionClass::Microaneurysm => "microaneurysm",
        }
    }
}

impl TryFrom<u32> for LesionClass {
    type Error = Error;

    fn try_from(id: u32) -> Result<Self> {
        match id {
            1 => Ok(LesionClass::Exudate),
            2 => Ok(LesionClass::Microaneurysm),
            other => Err(Error::UnknownCategory(other)),
        }
    }
}

impl From<LesionClass> for u32 {
    fn from(c: LesionClass) -> u32 {
        c.id()
    }
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(n: u32) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(invalid(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

/// One lesion instance of one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    /// Unique within the image, starting at 1.
    pub instance_id: u32,
    pub image_id: String,
    pub class_id: LesionClass,
    pub mask_rle: Rle,
    pub bbox: BBox,
    pub area: u64,
}

impl InstanceAnnotation {
    pub fn from_rle(instance_id: u32, image_id: &str, class_id: LesionClass, mask_rle: Rle) -> Result<Self> {
        let bbox = mask_rle.bbox()?;
        let area = mask_rle.area();
        Ok(Self { instance_id, image_id: image_id.to_owned(), class_id, mask_rle, bbox, area })
    }

    /// Checks that `area` and `bbox` agree with the encoded mask.
    pub fn validate(&self) -> Result<()> {
        let area = self.mask_rle.area();
        if area == 0 {
            return Err(Error::Validation(format!(
                "annotation {} of {:?} has an empty mask",
                self.instance_id, self.image_id
            )));
        }
        if area != self.area {
            return Err(Error::Validation(format!(
                "annotation {} of {:?}: area {} but mask has {area} pixels",
                self.instance_id, self.image_id, self.area
            )));
        }
        let bbox = self.mask_rle.bbox()?;
        if bbox != self.bbox {
            return Err(Error::Validation(format!(
                "annotation {} of {:?}: bbox {:?} but mask is tight in {bbox:?}",
                self.instance_id, self.image_id, self.bbox
            )));
        }
        Ok(())
    }
}

/// Disjoint-set forest over provisional labels. Roots are always the
/// smallest label of their set.
struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Connected-component labeling of a mask.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    /// Row-major; 0 is background, components are `1..=count`.
    pub labels: Vec<u32>,
    /// Indexed by `label - 1`; ordered by `(top, left)` of the bounding box.
    pub boxes: Vec<BBox>,
    pub areas: Vec<u64>,
}

impl Labeling {
    pub fn count(&self) -> usize {
        self.boxes.len()
    }

    /// Foreground runs of each component as `(start, len)` row-major offsets.
    pub fn runs(&self) -> Vec<Vec<(usize, usize)>> {
        let mut runs = vec![Vec::new(); self.count()];
        for y in 0..self.height {
            let row = &self.labels[y * self.width..(y + 1) * self.width];
            let mut x = 0;
            while x < self.width {
                let l = row[x];
                let start = x;
                while x < self.width && row[x] == l {
                    x += 1;
                }
                if l != 0 {
                    runs[l as usize - 1].push((y * self.width + start, x - start));
                }
            }
        }
        runs
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        let data = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::from_vec(self.width, self.height, data).expect("labels match mask shape")
    }
}

/// Two-pass union-find labeling.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Labeling {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut uf = UnionFind::new();

    // Already-visited neighbours in raster order.
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, 0), (-1, -1), (0, -1), (1, -1)],
    };

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut current = 0u32;
            for &(dx, dy) in offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize {
                    continue;
                }
                let n = labels[ny as usize * w + nx as usize];
                if n != 0 {
                    current = if current == 0 { n } else { uf.union(current, n) };
                }
            }
            labels[y * w + x] = if current == 0 { uf.make_set() } else { current };
        }
    }

    // Resolve roots; gather boxes in first-appearance order.
    let mut root_slot = vec![u32::MAX; uf.parent.len()];
    let mut boxes: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut areas: Vec<u64> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = uf.find(l) as usize;
            if root_slot[root] == u32::MAX {
                root_slot[root] = boxes.len() as u32;
                boxes.push((x, y, x, y));
                areas.push(0);
            }
            let slot = root_slot[root] as usize;
            let b = &mut boxes[slot];
            b.0 = b.0.min(x);
            b.2 = b.2.max(x);
            b.3 = y;
            areas[slot] += 1;
            labels[y * w + x] = slot as u32 + 1;
        }
    }

    // Order by (top, left); first appearance breaks ties (stable sort).
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&i| (boxes[i].1, boxes[i].0));
    let mut rank = vec![0u32; boxes.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as u32 + 1;
    }
    for l in labels.iter_mut().filter(|l| **l != 0) {
        *l = rank[*l as usize - 1];
    }

    let boxes = order
        .iter()
        .map(|&i| {
            let (x0, y0, x1, y1) = boxes[i];
            BBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32)
        })
        .collect();
    let areas = order.iter().map(|&i| areas[i]).collect();
    Labeling { width: w, height: h, labels, boxes, areas }
}

/// Maximal connected foreground regions, ordered by `(top, left)` of their bbox.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<BinaryMask> {
    let labeling = label_components(mask, connectivity);
    (1..=labeling.count() as u32).map(|l| labeling.component_mask(l)).collect()
}

pub fn bbox_of(mask: &BinaryMask) -> Result<BBox> {
    mask.bbox()
}

/// One annotation per connected component, instance ids sequential from 1.
pub fn build_annotations(
    mask: &BinaryMask,
    class_id: LesionClass,
    image_id: &str,
    connectivity: Connectivity,
) -> Vec<InstanceAnnotation> {
    let labeling = label_components(mask, connectivity);
    labeling
        .runs()
        .into_iter()
        .zip(labeling.boxes.iter().zip(&labeling.areas))
        .enumerate()
        .map(|(i, (runs, (&bbox, &area)))| InstanceAnnotation {
            instance_id: i as u32 + 1,
            image_id: image_id.to_owned(),
            class_id,
            mask_rle: Rle::from_runs(mask.width(), mask.height(), &runs),
            bbox,
            area,
        })
        .collect()
}
