//! Annotation manifest, deterministic splitting, and synthetic fixtures.
//!
//! The manifest is a JSON document with `images`, `annotations` and
//! `categories`, shaped like the common detection-annotation layout. Each
//! image carries its split and a `source_class_hint`: the one lesion type
//! whose ground truth exists for that image.

mod split;
mod synth;

pub use split::{shuffle_split, Split, SplitAssignment, SplitCounts};
pub use synth::{generate_synthetic_fundus, SynthParams, SyntheticFundus};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{InstanceAnnotation, LesionClass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    /// Relative to the manifest's directory.
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub source_class_hint: LesionClass,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

pub fn fixed_categories() -> Vec<Category> {
    LesionClass::ALL.iter().map(|c| Category { id: c.id(), name: c.name().to_owned() }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<InstanceAnnotation>,
    pub categories: Vec<Category>,
}

impl DatasetManifest {
    pub fn new(images: Vec<ImageEntry>, annotations: Vec<InstanceAnnotation>) -> Self {
        Self { images, annotations, categories: fixed_categories() }
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Annotations grouped by image id, in manifest order.
    pub fn annotations_by_image(&self) -> HashMap<&str, Vec<&InstanceAnnotation>> {
        let mut map: HashMap<&str, Vec<&InstanceAnnotation>> = HashMap::new();
        for a in &self.annotations {
            map.entry(a.image_id.as_str()).or_default().push(a);
        }
        map
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.images.iter().filter(|i| i.split == split).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories != fixed_categories() {
            for c in &self.categories {
                LesionClass::try_from(c.id)?;
            }
            return Err(Error::Validation(format!("categories must be exactly {:?}", fixed_categories())));
        }
        let mut dims = HashMap::new();
        for img in &self.images {
            if dims.insert(img.image_id.as_str(), (img.width, img.height)).is_some() {
                return Err(Error::Validation(format!("duplicate image_id {:?}", img.image_id)));
            }
        }
        let mut seen = HashSet::new();
        for a in &self.annotations {
            let &(w, h) = dims.get(a.image_id.as_str()).ok_or_else(|| Error::DanglingImageId(a.image_id.clone()))?;
            if !seen.insert((a.image_id.as_str(), a.instance_id)) {
                return Err(Error::Validation(format!(
                    "duplicate instance_id {} in image {:?}",
                    a.instance_id, a.image_id
                )));
            }
            if a.mask_rle.size != [h, w] {
                return Err(Error::Validation(format!(
                    "annotation {} of {:?} has mask size {:?} but image is {w}x{h}",
                    a.instance_id, a.image_id, a.mask_rle.size
                )));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses and validates. Category ids are checked before the typed parse
    /// so an unknown id is reported as such rather than as a syntax error.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        check_category_ids(&value)?;
        let manifest: DatasetManifest = serde_json::from_value(value)?;
        manifest.validate()?;
        Ok(manifest)
    }
}

fn check_category_ids(value: &serde_json::Value) -> Result<()> {
    let ids = |list: &str, key: &str| -> Vec<u64> {
        value
            .get(list)
            .and_then(|v| v.as_array())
            .map(|items| items.iter().filter_map(|i| i.get(key)?.as_u64()).collect())
            .unwrap_or_default()
    };
    let all = ids("annotations", "class_id")
        .into_iter()
        .chain(ids("images", "source_class_hint"))
        .chain(ids("categories", "id"));
    for id in all {
        let id = u32::try_from(id).unwrap_or(u32::MAX);
        LesionClass::try_from(id)?;
    }
    Ok(())
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    m.validate()?;
    fs::write(path, m.to_json()?)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    DatasetManifest::from_json(&fs::read_to_string(path)?)
}

/// Sorts images by id, assigns splits with [`shuffle_split`], and sorts
/// annotations by `(image_id, instance_id)`, so identical inputs give
/// byte-identical JSON.
pub fn assemble_manifest(
    mut images: Vec<ImageEntry>,
    mut annotations: Vec<InstanceAnnotation>,
    seed: u64,
    counts: SplitCounts,
) -> Result<DatasetManifest> {
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let ids: Vec<String> = images.iter().map(|i| i.image_id.clone()).collect();
    let assignment = shuffle_split(&ids, seed, counts)?;
    let lookup = assignment.lookup();
    for img in &mut images {
        img.split = lookup[img.image_id.as_str()];
    }
    annotations.sort_by(|a, b| (&a.image_id, a.instance_id).cmp(&(&b.image_id, b.instance_id)));
    let manifest = DatasetManifest::new(images, annotations);
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{build_annotations, Connectivity};
    use crate::raster::BinaryMask;
    use proptest::prelude::*;

    const GOLDEN: &str = include_str!("../../tests/data/golden_manifest.json");

    fn square_mask(w: usize, h: usize, squares: &[(usize, usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for &(x0, y0, s) in squares {
            for y in y0..y0 + s {
                for x in x0..x0 + s {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    fn entry(id: &str, w: u32, h: u32, hint: LesionClass, split: Split) -> ImageEntry {
        ImageEntry {
            image_id: id.into(),
            file_name: format!("images/{id}.png"),
            width: w,
            height: h,
            source_class_hint: hint,
            split,
        }
    }

    #[test]
    fn golden_file_parses() {
        let m = DatasetManifest::from_json(GOLDEN).unwrap();
        assert_eq!(m.images.len(), 2);
        assert_eq!(m.images[0].image_id, "ex_001");
        assert_eq!(m.images[0].source_class_hint, LesionClass::Exudate);
        assert_eq!(m.images[1].split, Split::Test);
        assert_eq!(m.annotations.len(), 3);
        let ma = &m.annotations[2];
        assert_eq!((ma.class_id, ma.area), (LesionClass::Microaneurysm, 4));
        assert_eq!(ma.mask_rle.decode(), square_mask(8, 6, &[(5, 3, 2)]));
    }

    #[test]
    fn round_trip_through_file() {
        let m = DatasetManifest::from_json(GOLDEN).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        write_manifest(&m, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn dangling_image_id_is_named() {
        let text = GOLDEN
            .replace("\"image_id\": \"ma_007\",\n      \"class_id\"", "\"image_id\": \"ghost\",\n      \"class_id\"");
        assert_ne!(text, GOLDEN);
        match DatasetManifest::from_json(&text) {
            Err(Error::DanglingImageId(id)) => assert_eq!(id, "ghost"),
            other => panic!("expected dangling id error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_category_is_distinct_error() {
        let text = GOLDEN.replace("\"class_id\": 2", "\"class_id\": 5");
        assert!(matches!(DatasetManifest::from_json(&text), Err(Error::UnknownCategory(5))));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(DatasetManifest::from_json("{\"images\": ["), Err(Error::Parse(_))));
    }

    #[test]
    fn inconsistent_area_is_validation_error() {
        let text = GOLDEN.replace("\"area\": 4", "\"area\": 5");
        assert!(matches!(DatasetManifest::from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn assemble_is_deterministic() {
        let mut images = vec![];
        let mut anns = vec![];
        for i in (0..12).rev() {
            let id = format!("img_{i:02}");
            images.push(entry(&id, 16, 16, LesionClass::Exudate, Split::Train));
            anns.extend(build_annotations(
                &square_mask(16, 16, &[(i, 1, 2), (3, 9, 3)]),
                LesionClass::Exudate,
                &id,
                Connectivity::Eight,
            ));
        }
        let counts = SplitCounts { train: 8, val: 2, test: 2 };
        let a = assemble_manifest(images.clone(), anns.clone(), 5, counts).unwrap();
        let b = assemble_manifest(images, anns, 5, counts).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!((a.split_len(Split::Train), a.split_len(Split::Val), a.split_len(Split::Test)), (8, 2, 2));
        assert!(a.images.windows(2).all(|w| w[0].image_id < w[1].image_id));
    }

    fn manifest_strategy() -> impl Strategy<Value = DatasetManifest> {
        proptest::collection::vec(
            (
                1usize..12,
                1usize..12,
                any::<bool>(),
                0u8..3,
                proptest::collection::vec(proptest::bool::weighted(0.3), 144),
            ),
            0..6,
        )
        .prop_map(|imgs| {
            let mut images = vec![];
            let mut annotations = vec![];
            for (i, (w, h, ex, split, bits)) in imgs.into_iter().enumerate() {
                let id = format!("im{i}");
                let hint = if ex { LesionClass::Exudate } else { LesionClass::Microaneurysm };
                let split = [Split::Train, Split::Val, Split::Test][split as usize];
                let mask = BinaryMask::from_vec(w, h, bits[..w * h].to_vec()).unwrap();
                annotations.extend(build_annotations(&mask, hint, &id, Connectivity::Four));
                images.push(entry(&id, w as u32, h as u32, hint, split));
            }
            DatasetManifest::new(images, annotations)
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_lossless(m in manifest_strategy()) {
            let back = DatasetManifest::from_json(&m.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
