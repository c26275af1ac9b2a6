//! Evaluation: mIoU, mAcc, and panoptic reconstruction quality split into
//! thing/stuff.
//!
//! Matching follows the panoptic-quality convention: predicted and ground-
//! truth segments of one class match when IoU > 0.5 (strict), which makes
//! every match unique; PRQ_c = sum of matched IoUs / (TP + FP/2 + FN/2).
//! Primitives with unlabeled ground truth (-1) are ignored everywhere, and
//! classes absent from the ground truth are excluded from the means.

use crate::error::{Error, Result};
use crate::panoptic::{ClassKind, PanopticLabeling, QuerySet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-primitive ground-truth labels: class and instance indices, -1 where
/// unlabeled, plus the thing/stuff kind of every class index.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub class_of: Vec<i32>,
    pub instance_of: Vec<i32>,
    pub kinds: Vec<ClassKind>,
}

impl GroundTruth {
    pub fn new(class_of: Vec<i32>, instance_of: Vec<i32>, kinds: Vec<ClassKind>) -> Result<Self> {
        if class_of.len() != instance_of.len() {
            return Err(Error::Config("ground truth array length mismatch".into()));
        }
        for &c in &class_of {
            if c >= 0 && c as usize >= kinds.len() {
                return Err(Error::Config(format!(
                    "ground truth class {c} outside declared range {}",
                    kinds.len()
                )));
            }
        }
        Ok(Self {
            class_of,
            instance_of,
            kinds,
        })
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    fn labeled(&self) -> impl Iterator<Item = usize> + '_ {
        self.class_of
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c >= 0).then_some(i))
    }

    pub fn present_classes(&self) -> Vec<u32> {
        let mut present: Vec<u32> = self
            .class_of
            .iter()
            .filter_map(|&c| (c >= 0).then_some(c as u32))
            .collect();
        present.sort_unstable();
        present.dedup();
        present
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: u32,
    pub name: String,
    pub kind: ClassKind,
    pub iou: f64,
    pub acc: f64,
    pub prq: f64,
    pub tp: u32,
    pub fp: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    pub matched_iou_sum: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub macc: f64,
    pub prq_thing: Option<f64>,
    pub prq_stuff: Option<f64>,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    /// Aligned-column human-readable rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "mIoU {:.4}  mAcc {:.4}  PRQ(T) {}  PRQ(S) {}\n",
            self.miou,
            self.macc,
            self.prq_thing
                .map_or("  n/a ".into(), |v| format!("{v:.4}")),
            self.prq_stuff
                .map_or("  n/a ".into(), |v| format!("{v:.4}")),
        ));
        s.push_str(&format!(
            "{:<16} {:>6} {:>8} {:>8} {:>8} {:>4} {:>4} {:>4}\n",
            "class", "kind", "iou", "acc", "prq", "tp", "fp", "fn"
        ));
        for c in &self.per_class {
            s.push_str(&format!(
                "{:<16} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>4} {:>4} {:>4}\n",
                c.name,
                match c.kind {
                    ClassKind::Thing => "thing",
                    ClassKind::Stuff => "stuff",
                },
                c.iou,
                c.acc,
                c.prq,
                c.tp,
                c.fp,
                c.fn_
            ));
        }
        s
    }
}

/// Mean IoU over ground-truth-present classes, plus the per-class values.
pub fn miou(pred_classes: &[u32], gt: &GroundTruth) -> Result<(f64, Vec<(u32, f64)>)> {
    check_lengths(pred_classes.len(), gt)?;
    let present = present_or_error(gt)?;
    let mut per_class = Vec::with_capacity(present.len());
    let mut sum = 0.0;
    for &c in &present {
        let mut inter = 0u64;
        let mut union = 0u64;
        for i in gt.labeled() {
            let p = pred_classes[i] == c;
            let g = gt.class_of[i] == c as i32;
            if p && g {
                inter += 1;
            }
            if p || g {
                union += 1;
            }
        }
        let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        per_class.push((c, iou));
        sum += iou;
    }
    Ok((sum / present.len() as f64, per_class))
}

/// Mean per-class recall over ground-truth-present classes.
pub fn macc(pred_classes: &[u32], gt: &GroundTruth) -> Result<(f64, Vec<(u32, f64)>)> {
    check_lengths(pred_classes.len(), gt)?;
    let present = present_or_error(gt)?;
    let mut per_class = Vec::with_capacity(present.len());
    let mut sum = 0.0;
    for &c in &present {
        let mut correct = 0u64;
        let mut total = 0u64;
        for i in gt.labeled() {
            if gt.class_of[i] == c as i32 {
                total += 1;
                if pred_classes[i] == c {
                    correct += 1;
                }
            }
        }
        let acc = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        per_class.push((c, acc));
        sum += acc;
    }
    Ok((sum / present.len() as f64, per_class))
}

fn check_lengths(pred_len: usize, gt: &GroundTruth) -> Result<()> {
    if pred_len != gt.len() {
        return Err(Error::Config(format!(
            "prediction covers {pred_len} primitives, ground truth {}",
            gt.len()
        )));
    }
    Ok(())
}

fn present_or_error(gt: &GroundTruth) -> Result<Vec<u32>> {
    let present = gt.present_classes();
    if present.is_empty() {
        return Err(Error::Evaluation("no labeled ground-truth primitive".into()));
    }
    Ok(present)
}

#[derive(Debug, Clone)]
pub struct PrqDetail {
    pub per_class: Vec<(u32, PrqClass)>,
    pub prq_thing: Option<f64>,
    pub prq_stuff: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PrqClass {
    pub prq: f64,
    pub tp: u32,
    pub fp: u32,
    pub fn_: u32,
    pub matched_iou_sum: f64,
}

/// Segments of one class: primitive index sets, ground-truth-unlabeled
/// primitives removed. Stuff compares one region per class.
fn pred_segments_of_class(pred: &PanopticLabeling, gt: &GroundTruth, c: u32) -> Vec<Vec<u32>> {
    let kind = gt.kinds[c as usize];
    let mut by_instance: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (i, (&inst, &class)) in pred
        .instance_of_primitive
        .iter()
        .zip(&pred.class_of_primitive)
        .enumerate()
    {
        if class != c || inst < 0 || gt.class_of[i] < 0 {
            continue;
        }
        let key = if kind == ClassKind::Stuff { 0 } else { inst };
        by_instance.entry(key).or_default().push(i as u32);
    }
    by_instance.into_values().collect()
}

fn gt_segments_of_class(gt: &GroundTruth, c: u32) -> Vec<Vec<u32>> {
    let kind = gt.kinds[c as usize];
    let mut by_instance: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
    for (i, &class) in gt.class_of.iter().enumerate() {
        if class != c as i32 {
            continue;
        }
        let key = if kind == ClassKind::Stuff { 0 } else { gt.instance_of[i] };
        if kind == ClassKind::Thing && gt.instance_of[i] < 0 {
            continue;
        }
        by_instance.entry(key).or_default().push(i as u32);
    }
    by_instance.into_values().collect()
}

fn segment_iou(a: &[u32], b: &[u32]) -> f64 {
    // both sorted ascending by construction
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Panoptic reconstruction quality. Matches predicted to ground-truth
/// segments per class at IoU > 0.5 and averages PRQ_c over thing and stuff
/// classes present in the ground truth.
pub fn prq(pred: &PanopticLabeling, gt: &GroundTruth) -> Result<PrqDetail> {
    check_lengths(pred.len(), gt)?;
    let present = present_or_error(gt)?;
    let mut per_class = Vec::with_capacity(present.len());
    let mut thing_sum = 0.0;
    let mut thing_count = 0usize;
    let mut stuff_sum = 0.0;
    let mut stuff_count = 0usize;

    for &c in &present {
        let preds = pred_segments_of_class(pred, gt, c);
        let gts = gt_segments_of_class(gt, c);
        let mut matched_pred = vec![false; preds.len()];
        let mut matched_gt = vec![false; gts.len()];
        let mut iou_sum = 0.0;
        let mut tp = 0u32;
        // IoU > 0.5 matches are mutually exclusive, so a single scan finds
        // them all (greedy is exact here)
        for (pi, p) in preds.iter().enumerate() {
            for (gi, g) in gts.iter().enumerate() {
                if matched_gt[gi] {
                    continue;
                }
                let iou = segment_iou(p, g);
                if iou > 0.5 {
                    matched_pred[pi] = true;
                    matched_gt[gi] = true;
                    iou_sum += iou;
                    tp += 1;
                    break;
                }
            }
        }
        let fp = matched_pred.iter().filter(|&&m| !m).count() as u32;
        let fn_ = matched_gt.iter().filter(|&&m| !m).count() as u32;
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        let value = if denom > 0.0 { iou_sum / denom } else { 0.0 };
        per_class.push((
            c,
            PrqClass {
                prq: value,
                tp,
                fp,
                fn_,
                matched_iou_sum: iou_sum,
            },
        ));
        match gt.kinds[c as usize] {
            ClassKind::Thing => {
                thing_sum += value;
                thing_count += 1;
            }
            ClassKind::Stuff => {
                stuff_sum += value;
                stuff_count += 1;
            }
        }
    }

    Ok(PrqDetail {
        per_class,
        prq_thing: (thing_count > 0).then(|| thing_sum / thing_count as f64),
        prq_stuff: (stuff_count > 0).then(|| stuff_sum / stuff_count as f64),
    })
}

/// Full evaluation producing the report the `eval` stage writes.
pub fn evaluate(pred: &PanopticLabeling, gt: &GroundTruth, queries: &QuerySet) -> Result<EvalReport> {
    let (miou_v, iou_per_class) = miou(&pred.class_of_primitive, gt)?;
    let (macc_v, acc_per_class) = macc(&pred.class_of_primitive, gt)?;
    let detail = prq(pred, gt)?;
    let iou_map: BTreeMap<u32, f64> = iou_per_class.into_iter().collect();
    let acc_map: BTreeMap<u32, f64> = acc_per_class.into_iter().collect();
    let per_class = detail
        .per_class
        .iter()
        .map(|&(c, p)| ClassReport {
            class: c,
            name: queries
                .entries
                .get(c as usize)
                .map(|e| e.name.clone())
                .unwrap_or_else(|| format!("class_{c}")),
            kind: gt.kinds[c as usize],
            iou: iou_map[&c],
            acc: acc_map[&c],
            prq: p.prq,
            tp: p.tp,
            fp: p.fp,
            fn_: p.fn_,
            matched_iou_sum: p.matched_iou_sum,
        })
        .collect();
    Ok(EvalReport {
        miou: miou_v,
        macc: macc_v,
        prq_thing: detail.prq_thing,
        prq_stuff: detail.prq_stuff,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panoptic::InstanceSummary;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn kinds(n_things: usize, n_stuff: usize) -> Vec<ClassKind> {
        let mut k = vec![ClassKind::Thing; n_things];
        k.extend(vec![ClassKind::Stuff; n_stuff]);
        k
    }

    fn labeling(instances: Vec<i32>, classes: Vec<u32>, n_classes: usize) -> PanopticLabeling {
        let max_inst = instances.iter().copied().max().unwrap_or(-1);
        let mut summaries = Vec::new();
        for inst in 0..=max_inst {
            let class = instances
                .iter()
                .zip(&classes)
                .find(|(&i, _)| i == inst)
                .map(|(_, &c)| c)
                .unwrap_or(0);
            summaries.push(InstanceSummary {
                class,
                kind: if (class as usize) < n_classes {
                    ClassKind::Thing
                } else {
                    ClassKind::Stuff
                },
                primitive_count: instances.iter().filter(|&&i| i == inst).count() as u32,
                mean_similarity: 1.0,
            });
        }
        PanopticLabeling {
            instance_of_primitive: instances,
            class_of_primitive: classes,
            instances: summaries,
        }
    }

    #[test]
    fn miou_perfect_and_swapped() {
        let gt = GroundTruth::new(
            vec![0, 0, 1, 1],
            vec![0, 0, 1, 1],
            kinds(2, 0),
        )
        .unwrap();
        let (v, _) = miou(&[0, 0, 1, 1], &gt).unwrap();
        assert_eq!(v, 1.0);
        let (v, _) = miou(&[1, 1, 0, 0], &gt).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn miou_half_correct_rest_absent_class() {
        // one GT class; half predicted correctly, rest predicted as a class
        // absent from GT -> IoU = 0.5 and the absent class is not averaged
        let gt = GroundTruth::new(vec![0, 0, 0, 0], vec![0; 4], kinds(2, 0)).unwrap();
        let (v, per) = miou(&[0, 0, 1, 1], &gt).unwrap();
        assert_eq!(per, vec![(0, 0.5)]);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn miou_ignores_unlabeled() {
        let gt = GroundTruth::new(vec![0, -1, 0], vec![0, -1, 0], kinds(1, 0)).unwrap();
        let (v, _) = miou(&[0, 1, 0], &gt).unwrap();
        assert_eq!(v, 1.0);
        let empty = GroundTruth::new(vec![-1, -1], vec![-1, -1], kinds(1, 0)).unwrap();
        assert!(matches!(miou(&[0, 0], &empty), Err(Error::Evaluation(_))));
    }

    #[test]
    fn macc_cases() {
        let gt = GroundTruth::new(vec![0, 0, 1, 1], vec![0, 0, 1, 1], kinds(2, 0)).unwrap();
        assert_eq!(macc(&[0, 0, 1, 1], &gt).unwrap().0, 1.0);
        // class A all correct, class B all wrong
        assert_eq!(macc(&[0, 0, 0, 0], &gt).unwrap().0, 0.5);
        // 3/4 and 1/2
        let gt = GroundTruth::new(
            vec![0, 0, 0, 0, 1, 1],
            vec![0; 6],
            kinds(2, 0),
        )
        .unwrap();
        let (v, _) = macc(&[0, 0, 0, 1, 1, 0], &gt).unwrap();
        assert!((v - 0.625).abs() < 1e-12);
    }

    #[test]
    fn prq_perfect() {
        let gt = GroundTruth::new(
            vec![0, 0, 1, 1, 2, 2],
            vec![0, 0, 1, 1, 0, 0],
            kinds(2, 1),
        )
        .unwrap();
        let pred = labeling(vec![0, 0, 1, 1, 2, 2], vec![0, 0, 1, 1, 2, 2], 2);
        let d = prq(&pred, &gt).unwrap();
        assert_eq!(d.prq_thing, Some(1.0));
        assert_eq!(d.prq_stuff, Some(1.0));
    }

    #[test]
    fn prq_split_instance_yields_zero() {
        // one GT thing instance predicted as two equal halves: each IoU is
        // exactly 0.5, strict matching fails, PRQ = 0/(0 + 1 + 0.5)
        let gt = GroundTruth::new(vec![0; 4], vec![0; 4], kinds(1, 0)).unwrap();
        let pred = labeling(vec![0, 0, 1, 1], vec![0, 0, 0, 0], 1);
        let d = prq(&pred, &gt).unwrap();
        let (_, c) = d.per_class[0];
        assert_eq!((c.tp, c.fp, c.fn_), (0, 2, 1));
        assert_eq!(c.prq, 0.0);
    }

    #[test]
    fn prq_single_match_point_eight() {
        // 10 GT primitives, prediction covers 8 of them plus 0 extra:
        // IoU = 0.8, no FP/FN
        let mut gt_class = vec![0i32; 10];
        gt_class.extend(vec![-1i32; 2]);
        let mut gt_inst = vec![0i32; 10];
        gt_inst.extend(vec![-1i32; 2]);
        let gt = GroundTruth::new(gt_class, gt_inst, kinds(1, 0)).unwrap();
        let mut inst = vec![0i32; 8];
        inst.extend(vec![-1i32; 4]);
        let mut class = vec![0u32; 12];
        class[8..].fill(0);
        let pred = labeling(inst, class, 1);
        let d = prq(&pred, &gt).unwrap();
        let (_, c) = d.per_class[0];
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 0));
        assert!((c.prq - 0.8).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_to_instance_relabeling() {
        let gt = GroundTruth::new(
            vec![0, 0, 0, 1, 1, 1],
            vec![0, 0, 0, 1, 1, 1],
            kinds(2, 0),
        )
        .unwrap();
        let a = labeling(vec![0, 0, 0, 1, 1, 1], vec![0, 0, 0, 1, 1, 1], 2);
        let b = labeling(vec![1, 1, 1, 0, 0, 0], vec![0, 0, 0, 1, 1, 1], 2);
        let da = prq(&a, &gt).unwrap();
        let db = prq(&b, &gt).unwrap();
        assert_eq!(da.prq_thing, db.prq_thing);
    }

    /// Exhaustive max-weight matching over IoU > 0.5 pairs.
    fn brute_force_prq_class(preds: &[Vec<u32>], gts: &[Vec<u32>]) -> f64 {
        fn best(
            preds: &[Vec<u32>],
            gts: &[Vec<u32>],
            pi: usize,
            used: &mut Vec<bool>,
        ) -> (f64, u32) {
            if pi == preds.len() {
                return (0.0, 0);
            }
            // option: leave pred pi unmatched
            let (mut best_sum, mut best_tp) = best(preds, gts, pi + 1, used);
            for gi in 0..gts.len() {
                if used[gi] {
                    continue;
                }
                let iou = segment_iou(&preds[pi], &gts[gi]);
                if iou > 0.5 {
                    used[gi] = true;
                    let (s, t) = best(preds, gts, pi + 1, used);
                    used[gi] = false;
                    if s + iou > best_sum {
                        best_sum = s + iou;
                        best_tp = t + 1;
                    }
                }
            }
            (best_sum, best_tp)
        }
        let mut used = vec![false; gts.len()];
        let (iou_sum, tp) = best(preds, gts, 0, &mut used);
        let fp = preds.len() as u32 - tp;
        let fn_ = gts.len() as u32 - tp;
        let denom = tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64;
        if denom > 0.0 {
            iou_sum / denom
        } else {
            0.0
        }
    }

    #[test]
    fn prq_matches_brute_force_on_random_scenes() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = 120;
            let n_inst = rng.random_range(1..=6);
            let gt_inst: Vec<i32> = (0..n).map(|_| rng.random_range(0..n_inst) as i32).collect();
            let gt_class: Vec<i32> = (0..n).map(|i| (gt_inst[i] % 2) as i32).collect();
            let gt = GroundTruth::new(gt_class.clone(), gt_inst.clone(), kinds(2, 0)).unwrap();

            let p_inst_count = rng.random_range(1..=6);
            let pred_inst: Vec<i32> = (0..n)
                .map(|i| {
                    // mostly copy GT with noise so matches sometimes exist
                    if rng.random::<f64>() < 0.7 {
                        gt_inst[i]
                    } else {
                        rng.random_range(0..p_inst_count) as i32
                    }
                })
                .collect();
            let pred_class: Vec<u32> = pred_inst.iter().map(|&i| (i % 2) as u32).collect();
            let pred = labeling(pred_inst, pred_class, 2);

            let detail = prq(&pred, &gt).unwrap();
            for &(c, pc) in &detail.per_class {
                let preds = pred_segments_of_class(&pred, &gt, c);
                let gts = gt_segments_of_class(&gt, c);
                let expect = brute_force_prq_class(&preds, &gts);
                assert!(
                    (pc.prq - expect).abs() < 1e-12,
                    "class {c}: greedy {} != brute force {expect}",
                    pc.prq
                );
            }
        }
    }

    #[test]
    fn miou_macc_match_confusion_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 1000;
        let k = 5;
        let gt_class: Vec<i32> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.05 {
                    -1
                } else {
                    rng.random_range(0..k) as i32
                }
            })
            .collect();
        let pred: Vec<u32> = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
        let gt = GroundTruth::new(gt_class.clone(), vec![0; n], kinds(k, 0)).unwrap();

        // confusion matrix oracle
        let mut conf = vec![vec![0u64; k]; k];
        for i in 0..n {
            if gt_class[i] >= 0 {
                conf[gt_class[i] as usize][pred[i] as usize] += 1;
            }
        }
        let (got_miou, per_iou) = miou(&pred, &gt).unwrap();
        let (got_macc, _) = macc(&pred, &gt).unwrap();
        let mut exp_iou_sum = 0.0;
        let mut exp_acc_sum = 0.0;
        let mut present = 0usize;
        for c in 0..k {
            let gt_total: u64 = conf[c].iter().sum();
            if gt_total == 0 {
                continue;
            }
            present += 1;
            let tp = conf[c][c];
            let pred_total: u64 = (0..k).map(|g| conf[g][c]).sum();
            let union = gt_total + pred_total - tp;
            exp_iou_sum += tp as f64 / union as f64;
            exp_acc_sum += tp as f64 / gt_total as f64;
            let found = per_iou.iter().find(|&&(cc, _)| cc == c as u32).unwrap();
            assert!((found.1 - tp as f64 / union as f64).abs() < 1e-12);
        }
        assert!((got_miou - exp_iou_sum / present as f64).abs() < 1e-12);
        assert!((got_macc - exp_acc_sum / present as f64).abs() < 1e-12);
    }
}
