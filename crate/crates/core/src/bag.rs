//! Feature bags, group layouts, manifests, and the sampling / splitting
//! operations that prepare them for training.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// How a bag's feature columns are partitioned into extractor groups.
///
/// Group `k` owns a contiguous block of `group_dims[k]` columns; the blocks
/// appear in group order and together cover the full feature width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    group_names: Vec<String>,
    group_dims: Vec<usize>,
}

impl GroupLayout {
    pub fn new(group_names: Vec<String>, group_dims: Vec<usize>) -> Result<Self> {
        if group_names.is_empty() || group_names.len() != group_dims.len() {
            return Err(Error::parameter(format!(
                "layout needs matching, nonempty name/dim lists (got {} names, {} dims)",
                group_names.len(),
                group_dims.len()
            )));
        }
        if group_dims.iter().any(|&d| d == 0) {
            return Err(Error::parameter("group widths must be positive"));
        }
        Ok(GroupLayout {
            group_names,
            group_dims,
        })
    }

    /// Layout with groups named `g0..g{K-1}`.
    pub fn with_dims(group_dims: Vec<usize>) -> Result<Self> {
        let names = (0..group_dims.len()).map(|k| format!("g{k}")).collect();
        GroupLayout::new(names, group_dims)
    }

    pub fn group_count(&self) -> usize {
        self.group_dims.len()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_dims(&self) -> &[usize] {
        &self.group_dims
    }

    pub fn total_width(&self) -> usize {
        self.group_dims.iter().sum()
    }

    /// Column range `[start, end)` owned by group `k`.
    pub fn col_range(&self, k: usize) -> core::ops::Range<usize> {
        debug_assert!(k < self.group_count());
        let start: usize = self.group_dims[..k].iter().sum();
        start..start + self.group_dims[k]
    }

    /// Layout restricted to the listed groups, in the given order.
    pub fn subset(&self, groups: &[usize]) -> Result<GroupLayout> {
        if groups.is_empty() {
            return Err(Error::parameter("group subset must be nonempty"));
        }
        let mut names = Vec::with_capacity(groups.len());
        let mut dims = Vec::with_capacity(groups.len());
        for &g in groups {
            if g >= self.group_count() {
                return Err(Error::parameter(format!(
                    "group index {g} out of range (layout has {})",
                    self.group_count()
                )));
            }
            names.push(self.group_names[g].clone());
            dims.push(self.group_dims[g]);
        }
        GroupLayout::new(names, dims)
    }
}

/// One slide's worth of instances: an `n x m` feature matrix plus identity
/// and label. Column structure is described by the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBag {
    pub bag_id: String,
    pub features: Matrix,
    pub label: usize,
    pub layout: GroupLayout,
}

impl FeatureBag {
    pub fn new(bag_id: String, features: Matrix, label: usize, layout: GroupLayout) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::parameter(format!("bag `{bag_id}` has no instances")));
        }
        if features.cols() != layout.total_width() {
            return Err(Error::dimension(
                "feature bag",
                format!("{} columns (layout width)", layout.total_width()),
                features.shape(),
            ));
        }
        if !features.is_finite() {
            return Err(Error::numeric(format!(
                "bag `{bag_id}` contains non-finite feature values"
            )));
        }
        Ok(FeatureBag {
            bag_id,
            features,
            label,
            layout,
        })
    }

    pub fn instances(&self) -> usize {
        self.features.rows()
    }

    /// New bag containing only the columns of the listed groups.
    pub fn restrict_to_groups(&self, groups: &[usize]) -> Result<FeatureBag> {
        let layout = self.layout.subset(groups)?;
        let parts: Vec<Matrix> = groups
            .iter()
            .map(|&g| {
                let r = self.layout.col_range(g);
                self.features.slice_cols(r.start, r.end)
            })
            .collect();
        let refs: Vec<&Matrix> = parts.iter().collect();
        let features = Matrix::hcat(&refs)?;
        FeatureBag::new(self.bag_id.clone(), features, self.label, layout)
    }
}

/// Split assignment of one manifest entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::parameter(format!("unknown split tag `{other}`"))),
        }
    }
}

/// One bag's bookkeeping inside a manifest. `path` is interpreted relative
/// to wherever the manifest itself lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// Dataset index: the layout every bag shares, the class count, and one
/// entry per bag file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub layout: GroupLayout,
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::parameter("manifest needs at least one class"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if e.label >= self.num_classes {
                return Err(Error::parameter(format!(
                    "entry `{}` has label {} outside [0, {})",
                    e.id, e.label, self.num_classes
                )));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::parameter(format!("duplicate bag id `{}`", e.id)));
            }
        }
        Ok(())
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.entries_in(split).count()
    }
}

/// Train/val/test fractions plus the seed that fixes the assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec { train, val, test, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::parameter(format!("{name} fraction {f} outside [0, 1]")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::parameter(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Resizes a bag to exactly `target_n` instances.
///
/// More rows than needed: a uniform without-replacement subset, kept in the
/// original row order. Fewer: the original rows first, then all-zero rows.
/// Exactly `target_n`: returned unchanged.
pub fn sample_or_pad(bag: &FeatureBag, target_n: usize, rng: &mut RngStream) -> Result<FeatureBag> {
    if target_n == 0 {
        return Err(Error::parameter("target instance count must be positive"));
    }
    let n = bag.instances();
    let features = if n == target_n {
        bag.features.clone()
    } else if n > target_n {
        let picked = rng.distinct_indices(n, target_n);
        bag.features.select_rows(&picked)
    } else {
        let mut padded = Matrix::zeros(target_n, bag.features.cols());
        for i in 0..n {
            padded.row_mut(i).copy_from_slice(bag.features.row(i));
        }
        padded
    };
    FeatureBag::new(bag.bag_id.clone(), features, bag.label, bag.layout.clone())
}

/// Assigns split tags class by class so every split keeps the class
/// distribution.
///
/// Within each class the per-split counts come from largest-remainder
/// rounding (remainder ties resolved in train, val, test order). Entries are
/// ordered by bag id before the seeded shuffle, so the result depends only on
/// the manifest contents and the seed, not on entry order.
pub fn stratified_split(manifest: &Manifest, spec: &SplitSpec) -> Result<Manifest> {
    spec.validate()?;
    manifest.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::parameter("cannot split an empty manifest"));
    }
    for class in 0..manifest.num_classes {
        if !manifest.entries.iter().any(|e| e.label == class) {
            return Err(Error::parameter(format!("class {class} has no entries")));
        }
    }

    let mut out = manifest.clone();
    let mut rng = RngStream::new(spec.seed);
    for class in 0..manifest.num_classes {
        let mut members: Vec<usize> = (0..out.entries.len())
            .filter(|&i| out.entries[i].label == class)
            .collect();
        members.sort_by(|&a, &b| out.entries[a].id.cmp(&out.entries[b].id));
        rng.shuffle(&mut members);

        let counts = largest_remainder(members.len(), [spec.train, spec.val, spec.test]);
        let mut cursor = 0;
        for (split, count) in [Split::Train, Split::Val, Split::Test].into_iter().zip(counts) {
            for &i in &members[cursor..cursor + count] {
                out.entries[i].split = split;
            }
            cursor += count;
        }
    }
    Ok(out)
}

/// Integer counts per split that sum to `n` and track the fractions to
/// within one entry each.
fn largest_remainder(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let mut base = [0usize; 3];
    let mut remainder = [0.0f64; 3];
    let mut assigned = 0;
    for (i, f) in fractions.iter().enumerate() {
        let quota = f * n as f64;
        base[i] = quota as usize; // floor: quota >= 0
        remainder[i] = quota - base[i] as f64;
        assigned += base[i];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainder[b].partial_cmp(&remainder[a]).unwrap().then(a.cmp(&b)));
    let mut leftover = n - assigned;
    for &i in &order {
        if leftover == 0 {
            break;
        }
        base[i] += 1;
        leftover -= 1;
    }
    base
}
