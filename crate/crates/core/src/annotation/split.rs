use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AggregationConfig;
use crate::datamodel::{BinaryClass, DatasetManifest, Split};
use crate::error::{Error, Result};

/// Assigns train/val tags, stratified by binary class.
///
/// The train total is `round(n * ratio)`; it is shared between classes by
/// largest remainder so each class keeps the ratio to within one record.
pub fn split_dataset(manifest: &DatasetManifest, cfg: &AggregationConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    if let Some(r) = manifest.iter().find(|r| r.binary_class.is_none()) {
        return Err(Error::Unresolved(r.image_id.clone()));
    }
    let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in manifest.iter().enumerate() {
        let g = usize::from(r.binary_class == Some(BinaryClass::Positive));
        groups[g].push(i);
    }
    let n = manifest.len();
    let target = (n as f64 * cfg.split_ratio).round() as usize;
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * cfg.split_ratio).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order = [0usize, 1];
    // Largest fractional part first; ties go to the larger class.
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(groups[b].len().cmp(&groups[a].len()))
    });
    let mut missing = target.saturating_sub(quota.iter().sum());
    for &g in order.iter().cycle().take(4) {
        if missing == 0 {
            break;
        }
        if quota[g] < groups[g].len() {
            quota[g] += 1;
            missing -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.split_seed);
    let mut assignment = vec![Split::Val; n];
    for (g, members) in groups.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        for &i in &members[..quota[g]] {
            assignment[i] = Split::Train;
        }
    }
    let mut i = 0;
    manifest.clone().try_map(|mut r| {
        r.split = Some(assignment[i]);
        i += 1;
        Ok(r)
    })
}
