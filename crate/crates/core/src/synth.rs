//! Synthetic multi-group bag generator for desk-scale experiments.
//!
//! Bags are standard-normal noise; a random 10-30% of each bag's instances
//! get a constant mean shift, applied only inside the column blocks of the
//! groups that are informative for the bag's label. Which groups carry which
//! classes is the signal plan, so class separability can be arranged per
//! group — the knob that drives ensemble-size experiments.

use alloc::format;
use alloc::vec::Vec;

use crate::bag::{FeatureBag, GroupLayout, Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Configuration of one synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub layout: GroupLayout,
    pub num_bags: usize,
    /// Instances per bag.
    pub instances: usize,
    pub num_classes: usize,
    /// `signal_plan[g]` lists the classes group `g` is informative for.
    pub signal_plan: Vec<Vec<usize>>,
    /// Mean shift added to signal instances inside informative blocks.
    pub shift: f64,
    /// Range the per-bag signal fraction is drawn from.
    pub signal_fraction: (f64, f64),
}

impl SynthSpec {
    pub fn new(
        layout: GroupLayout,
        num_bags: usize,
        instances: usize,
        num_classes: usize,
        signal_plan: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let spec = SynthSpec {
            layout,
            num_bags,
            instances,
            num_classes,
            signal_plan,
            shift: 2.0,
            signal_fraction: (0.1, 0.3),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default plan: class `j` maps to the nonempty group subset whose bit
    /// pattern is `1 + (j mod (2^K - 1))`. Subsets are distinct while
    /// `c <= 2^K - 1`, so every class gets its own group signature.
    pub fn default_plan(layout: &GroupLayout, num_classes: usize) -> Vec<Vec<usize>> {
        let k = layout.group_count();
        let combinations = (1usize << k) - 1;
        let mut plan: Vec<Vec<usize>> = (0..k).map(|_| Vec::new()).collect();
        for class in 0..num_classes {
            let pattern = 1 + (class % combinations);
            for (g, classes) in plan.iter_mut().enumerate() {
                if pattern & (1 << g) != 0 {
                    classes.push(class);
                }
            }
        }
        plan
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bags == 0 || self.instances == 0 || self.num_classes == 0 {
            return Err(Error::parameter("bags, instances, and classes must be positive"));
        }
        if self.signal_plan.len() != self.layout.group_count() {
            return Err(Error::parameter(format!(
                "plan covers {} groups, layout has {}",
                self.signal_plan.len(),
                self.layout.group_count()
            )));
        }
        for classes in &self.signal_plan {
            if let Some(&bad) = classes.iter().find(|&&c| c >= self.num_classes) {
                return Err(Error::parameter(format!(
                    "plan references class {bad} outside [0, {})",
                    self.num_classes
                )));
            }
        }
        for class in 0..self.num_classes {
            if !self.signal_plan.iter().any(|classes| classes.contains(&class)) {
                return Err(Error::parameter(format!(
                    "class {class} is not covered by any group's signal plan"
                )));
            }
        }
        let (lo, hi) = self.signal_fraction;
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::parameter("signal fraction range must satisfy 0 <= lo <= hi <= 1"));
        }
        Ok(())
    }
}

/// Generates the manifest and bags for `spec`, deterministically in `rng`.
///
/// Labels cycle over the classes so the dataset is balanced. Per bag the
/// draw order is fixed: the noise matrix row-major, then the signal
/// fraction, then the signal rows.
pub fn synth_generate(spec: &SynthSpec, rng: &mut RngStream) -> Result<(Manifest, Vec<FeatureBag>)> {
    spec.validate()?;
    let width = spec.layout.total_width();
    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut entries = Vec::with_capacity(spec.num_bags);
    for b in 0..spec.num_bags {
        let label = b % spec.num_classes;
        let id = format!("synth_{b:05}");
        let mut features = Matrix::from_fn(spec.instances, width, |_, _| rng.normal());

        let (lo, hi) = spec.signal_fraction;
        let fraction = lo + rng.uniform_f64() * (hi - lo);
        let count = ((crate::math::round(fraction * spec.instances as f64)) as usize)
            .clamp(1, spec.instances);
        let signal_rows = rng.distinct_indices(spec.instances, count);
        for (g, classes) in spec.signal_plan.iter().enumerate() {
            if !classes.contains(&label) {
                continue;
            }
            let range = spec.layout.col_range(g);
            for &row in &signal_rows {
                for v in &mut features.row_mut(row)[range.clone()] {
                    *v += spec.shift;
                }
            }
        }

        entries.push(ManifestEntry {
            id: id.clone(),
            path: format!("bags/{id}.gmbg"),
            label,
            split: Split::Unassigned,
        });
        bags.push(FeatureBag::new(id, features, label, spec.layout.clone())?);
    }
    let manifest = Manifest {
        layout: spec.layout.clone(),
        num_classes: spec.num_classes,
        entries,
    };
    manifest.validate()?;
    Ok((manifest, bags))
}
