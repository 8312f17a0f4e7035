//! Map accuracy (per-class KLD, ROC AUC) and mission efficiency (executed
//! path-length ratios).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occupancy::OccupancyGrid;
use crate::planner::Cell;
use crate::scalar::Real;

pub const DEFAULT_KLD_EPS: f64 = 1e-4;

/// Ground-truth voxel class thresholds.
pub const FREE_BELOW: f64 = 0.45;
pub const OCCUPIED_ABOVE: f64 = 0.55;

const CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelClass {
    Free,
    Uncertain,
    Occupied,
}

impl VoxelClass {
    pub const ALL: [VoxelClass; 3] = [VoxelClass::Free, VoxelClass::Uncertain, VoxelClass::Occupied];

    pub fn of<T: Real>(p_gt: T) -> Self {
        if p_gt < T::lit(FREE_BELOW) {
            VoxelClass::Free
        } else if p_gt > T::lit(OCCUPIED_ABOVE) {
            VoxelClass::Occupied
        } else {
            VoxelClass::Uncertain
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VoxelClass::Free => "free",
            VoxelClass::Uncertain => "uncertain",
            VoxelClass::Occupied => "occupied",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// KL divergence in nats between Bernoulli(p) and Bernoulli(q), both clamped
/// into `[eps, 1 - eps]`.
pub fn bernoulli_kld<T: Real>(p_gt: T, p_est: T, eps: T) -> T {
    let lo = eps;
    let hi = T::one() - eps;
    let p = p_gt.max(lo).min(hi);
    let q = p_est.max(lo).min(hi);
    if p == q {
        return T::zero();
    }
    let one = T::one();
    let d = p * (p / q).ln() + (one - p) * ((one - p) / (one - q)).ln();
    d.max(T::zero())
}

fn check_aligned<T: Real>(gt: &OccupancyGrid<T>, est: &OccupancyGrid<T>) -> Result<()> {
    if gt.spec() != est.spec() {
        return Err(Error::Misaligned(format!("{:?} vs {:?}", gt.spec(), est.spec())));
    }
    Ok(())
}

/// Per-class KLD sums for one map comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassKld {
    pub sum: [f64; 3],
    pub count: [usize; 3],
}

impl ClassKld {
    pub fn mean(&self, class: VoxelClass) -> f64 {
        let k = class.slot();
        if self.count[k] == 0 {
            0.0
        } else {
            self.sum[k] / self.count[k] as f64
        }
    }

    pub fn total(&self) -> usize {
        self.count.iter().sum()
    }

    pub fn overall(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            self.sum.iter().sum::<f64>() / n as f64
        }
    }
}

/// Mean KLD per ground-truth class. Voxels unobserved in `gt` are skipped;
/// unobserved estimate voxels count as 0.5.
pub fn mean_kld_per_class<T: Real>(gt: &OccupancyGrid<T>, est: &OccupancyGrid<T>, eps: T) -> Result<ClassKld> {
    check_aligned(gt, est)?;
    let n = gt.spec().len();
    let partial: Vec<ClassKld> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = ClassKld { sum: [0.0; 3], count: [0; 3] };
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                if !gt.is_observed(i) {
                    continue;
                }
                let p = gt.probability(i);
                let k = VoxelClass::of(p).slot();
                acc.sum[k] += bernoulli_kld(p, est.probability(i), eps).as_f64();
                acc.count[k] += 1;
            }
            acc
        })
        .collect();
    Ok(partial.into_iter().fold(ClassKld { sum: [0.0; 3], count: [0; 3] }, |mut a, b| {
        for k in 0..3 {
            a.sum[k] += b.sum[k];
            a.count[k] += b.count[k];
        }
        a
    }))
}

/// Ranks (1-based) of `scores` with ties given their average rank.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// AUC of `scores` as a predictor of `labels` (true = positive) by the
/// Mann-Whitney rank statistic.
pub fn auc_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc { positives: pos, negatives: neg });
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC AUC of estimated probabilities against ground-truth occupied/free
/// labels. Uncertain and unobserved ground-truth voxels are excluded.
pub fn roc_auc<T: Real>(gt: &OccupancyGrid<T>, est: &OccupancyGrid<T>) -> Result<f64> {
    check_aligned(gt, est)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for i in 0..gt.spec().len() {
        if !gt.is_observed(i) {
            continue;
        }
        match VoxelClass::of(gt.probability(i)) {
            VoxelClass::Uncertain => {}
            c => {
                scores.push(est.probability(i).as_f64());
                labels.push(c == VoxelClass::Occupied);
            }
        }
    }
    auc_from_scores(&scores, &labels)
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

/// Scores of one estimated map against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapScores {
    pub kld: ClassKld,
    pub auc: Option<f64>,
}

pub fn score_map<T: Real>(gt: &OccupancyGrid<T>, est: &OccupancyGrid<T>) -> Result<MapScores> {
    let kld = mean_kld_per_class(gt, est, T::lit(DEFAULT_KLD_EPS))?;
    let auc = match roc_auc(gt, est) {
        Ok(a) => Some(a),
        Err(Error::UndefinedAuc { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MapScores { kld, auc })
}

/// Map accuracy over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub kld_overall: MeanStd,
    /// Indexed like [`VoxelClass::ALL`].
    pub kld_class: [MeanStd; 3],
    pub auc: MeanStd,
    /// Class counts of the first repetition (identical across repetitions
    /// sharing a ground truth).
    pub class_counts: [usize; 3],
}

impl MapReport {
    pub fn from_reps(reps: &[MapScores]) -> Self {
        let overall: Vec<f64> = reps.iter().map(|r| r.kld.overall()).collect();
        let kld_class = VoxelClass::ALL.map(|c| {
            let xs: Vec<f64> = reps.iter().filter(|r| r.kld.count[c.slot()] > 0).map(|r| r.kld.mean(c)).collect();
            MeanStd::of(&xs)
        });
        let aucs: Vec<f64> = reps.iter().filter_map(|r| r.auc).collect();
        Self {
            kld_overall: MeanStd::of(&overall),
            kld_class,
            auc: MeanStd::of(&aucs),
            class_counts: reps.first().map_or([0; 3], |r| r.kld.count),
        }
    }
}

/// Mission outcome keyed for pairing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub start: Cell,
    pub goal: Cell,
    pub seed: u64,
    pub length: f64,
    pub success: bool,
}

/// Boxplot statistics of per-pair length ratios (ours / naive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub ratios: Vec<f64>,
    pub pairs: usize,
    pub ours_failures: usize,
    pub naive_failures: usize,
    /// Includes outliers.
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-pair executed-length ratios. A pair where either run failed is left
/// out of the ratios and counted in the failure tallies.
pub fn path_ratio_report(ours: &[RunRecord], naive: &[RunRecord]) -> Result<RatioReport> {
    type Key = ((usize, usize), (usize, usize), u64);
    let key = |r: &RunRecord| -> Key { (r.start, r.goal, r.seed) };
    let mut by_key: BTreeMap<Key, &RunRecord> = BTreeMap::new();
    for r in naive {
        if by_key.insert(key(r), r).is_some() {
            return Err(Error::Unpaired(format!("duplicate naive run {:?}", key(r))));
        }
    }
    if ours.len() != naive.len() {
        return Err(Error::Unpaired(format!("{} runs vs {} naive runs", ours.len(), naive.len())));
    }
    let mut ratios = Vec::new();
    let (mut ours_failures, mut naive_failures) = (0, 0);
    for o in ours {
        let n = by_key
            .remove(&key(o))
            .ok_or_else(|| Error::Unpaired(format!("no naive run for {:?}", key(o))))?;
        if !o.success {
            ours_failures += 1;
        }
        if !n.success {
            naive_failures += 1;
        }
        if o.success && n.success {
            ratios.push(if n.length > 0.0 { o.length / n.length } else { 1.0 });
        }
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(RatioReport {
        pairs: ours.len(),
        ours_failures,
        naive_failures,
        mean: MeanStd::of(&ratios).mean,
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        max: sorted.last().copied().unwrap_or(f64::NAN),
        ratios,
    })
}

pub const MAP_REPORT_HEADER: &str = "label,metric,class,mean,std,n,count";

/// Rows of [`MAP_REPORT_HEADER`]: one per KLD class, one overall KLD and one AUC.
pub fn write_map_report_rows<W: Write>(mut w: W, label: &str, r: &MapReport) -> Result<()> {
    for c in VoxelClass::ALL {
        let m = r.kld_class[c.slot()];
        writeln!(w, "{label},kld,{},{},{},{},{}", c.label(), m.mean, m.std, m.n, r.class_counts[c.slot()])?;
    }
    let total: usize = r.class_counts.iter().sum();
    let o = r.kld_overall;
    writeln!(w, "{label},kld,all,{},{},{},{total}", o.mean, o.std, o.n)?;
    let a = r.auc;
    writeln!(w, "{label},auc,all,{},{},{},{}", a.mean, a.std, a.n, r.class_counts[0] + r.class_counts[2])?;
    Ok(())
}

pub const RATIO_HEADER: &str = "label,pairs,ours_failures,naive_failures,mean,median,q1,q3,min,max";

pub fn write_ratio_row<W: Write>(mut w: W, label: &str, r: &RatioReport) -> Result<()> {
    writeln!(
        w,
        "{label},{},{},{},{},{},{},{},{},{}",
        r.pairs, r.ours_failures, r.naive_failures, r.mean, r.median, r.q1, r.q3, r.min, r.max
    )?;
    Ok(())
}

/// One-page plain-text summary.
pub fn write_summary<W: Write>(mut w: W, maps: &[(String, MapReport)], ratios: &[(String, RatioReport)]) -> Result<()> {
    if !maps.is_empty() {
        writeln!(w, "Map accuracy (KLD in nats, mean ± std over repetitions)")?;
        writeln!(w, "{:<24} {:>18} {:>18} {:>18} {:>18} {:>18}", "run", "free", "uncertain", "occupied", "all", "AUC")?;
        for (label, r) in maps {
            let f = |m: MeanStd| format!("{:.5}±{:.5}", m.mean, m.std);
            writeln!(
                w,
                "{:<24} {:>18} {:>18} {:>18} {:>18} {:>18}",
                label,
                f(r.kld_class[0]),
                f(r.kld_class[1]),
                f(r.kld_class[2]),
                f(r.kld_overall),
                f(r.auc)
            )?;
        }
    }
    if !ratios.is_empty() {
        if !maps.is_empty() {
            writeln!(w)?;
        }
        writeln!(w, "Executed length ratio vs naive (mean includes outliers)")?;
        writeln!(w, "{:<24} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10}", "run", "pairs", "mean", "median", "q1", "q3", "max", "failures")?;
        for (label, r) in ratios {
            writeln!(
                w,
                "{:<24} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>4}/{:<4}",
                label, r.pairs, r.mean, r.median, r.q1, r.q3, r.max, r.ours_failures, r.naive_failures
            )?;
        }
    }
    Ok(())
}
