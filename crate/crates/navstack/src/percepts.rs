//! Segmentation-output processing: semantic/instance label maps, 2D box
//! extraction from connected instance regions, the two-head training loss,
//! and the evaluation metrics (overall accuracy, mean IoU, average
//! precision).

use serde::{Deserialize, Serialize};

/// Default minimum connected-component area for box extraction, in pixels.
pub const DEFAULT_MIN_AREA: usize = 20;
/// COCO-style IoU thresholds 0.50:0.05:0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerceptError {
    #[error("maps have different dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("tensor shape does not match labels: {0}")]
    ShapeMismatch(String),
    #[error("label {label} outside [{lo}, {hi}]")]
    LabelOutOfRange { label: u32, lo: u32, hi: u32 },
    #[error("loss weights must be non-negative with a positive sum")]
    BadWeights,
    #[error("pixel value {0} outside the class range [1, {1}]")]
    BadClassValue(u16, u16),
}

/// Per-pixel semantic class IDs in [1, N].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap {
    width: usize,
    height: usize,
    classes: Vec<u16>,
    num_classes: u16,
}

impl SemanticMap {
    pub fn new(width: usize, height: usize, classes: Vec<u16>, num_classes: u16) -> Result<Self, PerceptError> {
        if classes.len() != width * height {
            return Err(PerceptError::ShapeMismatch(format!(
                "{} values for {}x{}",
                classes.len(),
                width,
                height
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c < 1 || c > num_classes) {
            return Err(PerceptError::BadClassValue(bad, num_classes));
        }
        Ok(Self {
            width,
            height,
            classes,
            num_classes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn classes(&self) -> &[u16] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.classes[y * self.width + x]
    }
}

/// Per-pixel instance IDs; 0 means no instance. IDs need not be contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    width: usize,
    height: usize,
    ids: Vec<u32>,
}

impl InstanceMap {
    pub fn new(width: usize, height: usize, ids: Vec<u32>) -> Result<Self, PerceptError> {
        if ids.len() != width * height {
            return Err(PerceptError::ShapeMismatch(format!(
                "{} values for {}x{}",
                ids.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, ids })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.ids[y * self.width + x]
    }
}

/// Axis-aligned box with inclusive pixel corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
    pub class_id: u16,
    pub instance_id: u32,
}

impl BoundingBox2D {
    /// Pixel-count area (corners are inclusive).
    pub fn area(&self) -> usize {
        (self.x2 - self.x1 + 1) * (self.y2 - self.y1 + 1)
    }

    /// Intersection-over-union under inclusive pixel-extent semantics.
    pub fn iou(&self, other: &BoundingBox2D) -> f64 {
        let ix1 = self.x1.max(other.x1);
        let iy1 = self.y1.max(other.y1);
        let ix2 = self.x2.min(other.x2);
        let iy2 = self.y2.min(other.y2);
        if ix1 > ix2 || iy1 > iy2 {
            return 0.0;
        }
        let inter = ((ix2 - ix1 + 1) * (iy2 - iy1 + 1)) as f64;
        inter / (self.area() as f64 + other.area() as f64 - inter)
    }
}

/// Weights of the two loss heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, PerceptError> {
        if alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0 {
            return Err(PerceptError::BadWeights);
        }
        Ok(Self { alpha, beta })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

/// Aggregate evaluation result. `per_class_iou` carries `None` for classes
/// absent from both prediction and ground truth; `average_precision` is
/// `None` when no ground-truth boxes existed anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub mean_iou: f64,
    pub average_precision: Option<f64>,
    pub per_class_iou: Vec<Option<f64>>,
}

/// H x W x C logits tensor, row-major with the channel innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl LogitsTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, PerceptError> {
        if data.len() != height * width * channels {
            return Err(PerceptError::ShapeMismatch(format!(
                "{} values for {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let base = (y * self.width + x) * self.channels;
        &mut self.data[base..base + self.channels]
    }
}

fn check_dims(
    (wa, ha): (usize, usize),
    (wb, hb): (usize, usize),
) -> Result<(), PerceptError> {
    if wa != wb || ha != hb {
        return Err(PerceptError::DimensionMismatch(wa, ha, wb, hb));
    }
    Ok(())
}

/// Extracts one box per 4-connected component (of at least `min_area`
/// pixels) of every nonzero instance ID. The box spans the component's pixel
/// extent; its class is the majority semantic class over the component
/// (ties broken toward the smaller class ID). Output is sorted by instance
/// ID, then by y1.
pub fn extract_boxes(
    inst: &InstanceMap,
    sem: &SemanticMap,
    min_area: usize,
) -> Result<Vec<BoundingBox2D>, PerceptError> {
    check_dims((inst.width, inst.height), (sem.width, sem.height))?;
    let w = inst.width;
    let h = inst.height;
    let mut visited = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    let mut class_votes: std::collections::HashMap<u16, usize> = std::collections::HashMap::new();

    for start in 0..w * h {
        let id = inst.ids[start];
        if id == 0 || visited[start] {
            continue;
        }
        // Flood-fill the 4-connected component of this instance id.
        visited[start] = true;
        stack.push(start);
        let (mut x1, mut y1, mut x2, mut y2) = (w, h, 0usize, 0usize);
        let mut area = 0usize;
        class_votes.clear();
        while let Some(idx) = stack.pop() {
            let x = idx % w;
            let y = idx / w;
            area += 1;
            x1 = x1.min(x);
            y1 = y1.min(y);
            x2 = x2.max(x);
            y2 = y2.max(y);
            *class_votes.entry(sem.classes[idx]).or_insert(0) += 1;
            let mut try_push = |nx: usize, ny: usize| {
                let nidx = ny * w + nx;
                if !visited[nidx] && inst.ids[nidx] == id {
                    visited[nidx] = true;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                try_push(x - 1, y);
            }
            if x + 1 < w {
                try_push(x + 1, y);
            }
            if y > 0 {
                try_push(x, y - 1);
            }
            if y + 1 < h {
                try_push(x, y + 1);
            }
        }
        if area < min_area {
            continue;
        }
        let class_id = class_votes
            .iter()
            .map(|(&c, &n)| (n, std::cmp::Reverse(c)))
            .max()
            .map(|(_, std::cmp::Reverse(c))| c)
            .unwrap();
        boxes.push(BoundingBox2D {
            x1,
            y1,
            x2,
            y2,
            class_id,
            instance_id: id,
        });
    }
    boxes.sort_by_key(|b| (b.instance_id, b.y1, b.x1));
    Ok(boxes)
}

/// Two-head softmax cross entropy: `alpha * L_sem + beta * L_inst`, each
/// head the mean over pixels of -log softmax(logits)[label]. Labels are
/// 1-based against the channel dimension. Softmax is stabilized by max
/// subtraction.
pub fn multitask_loss(
    sem_logits: &LogitsTensor,
    sem_labels: &SemanticMap,
    inst_logits: &LogitsTensor,
    inst_labels: &InstanceMap,
    w: &LossWeights,
) -> Result<f64, PerceptError> {
    if sem_logits.width != sem_labels.width || sem_logits.height != sem_labels.height {
        return Err(PerceptError::ShapeMismatch(
            "semantic logits do not match the label map".into(),
        ));
    }
    if inst_logits.width != inst_labels.width || inst_logits.height != inst_labels.height {
        return Err(PerceptError::ShapeMismatch(
            "instance logits do not match the label map".into(),
        ));
    }
    check_dims(
        (sem_labels.width, sem_labels.height),
        (inst_labels.width, inst_labels.height),
    )?;

    let l_sem = mean_cross_entropy(sem_logits, |x, y| sem_labels.get(x, y) as u32)?;
    let l_inst = mean_cross_entropy(inst_logits, |x, y| inst_labels.get(x, y))?;
    Ok(w.alpha * l_sem + w.beta * l_inst)
}

fn mean_cross_entropy(
    logits: &LogitsTensor,
    label_at: impl Fn(usize, usize) -> u32,
) -> Result<f64, PerceptError> {
    let mut total = 0.0;
    for y in 0..logits.height {
        for x in 0..logits.width {
            let label = label_at(x, y);
            if label < 1 || label as usize > logits.channels {
                return Err(PerceptError::LabelOutOfRange {
                    label,
                    lo: 1,
                    hi: logits.channels as u32,
                });
            }
            let z = logits.pixel(x, y);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - z[label as usize - 1];
        }
    }
    Ok(total / (logits.width * logits.height) as f64)
}

/// Fraction of pixels whose predicted class equals the ground truth.
pub fn overall_accuracy(pred: &SemanticMap, gt: &SemanticMap) -> Result<f64, PerceptError> {
    check_dims((pred.width, pred.height), (gt.width, gt.height))?;
    let same = pred
        .classes
        .iter()
        .zip(&gt.classes)
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / pred.classes.len() as f64)
}

/// Per-class IoU and its mean. Classes absent from both maps are excluded
/// from the mean and reported as `None`.
pub fn mean_iou(
    pred: &SemanticMap,
    gt: &SemanticMap,
    num_classes: u16,
) -> Result<(f64, Vec<Option<f64>>), PerceptError> {
    check_dims((pred.width, pred.height), (gt.width, gt.height))?;
    let n = num_classes as usize;
    let mut inter = vec![0u64; n + 1];
    let mut pred_count = vec![0u64; n + 1];
    let mut gt_count = vec![0u64; n + 1];
    for (&p, &g) in pred.classes.iter().zip(&gt.classes) {
        if p < 1 || p > num_classes {
            return Err(PerceptError::BadClassValue(p, num_classes));
        }
        if g < 1 || g > num_classes {
            return Err(PerceptError::BadClassValue(g, num_classes));
        }
        pred_count[p as usize] += 1;
        gt_count[g as usize] += 1;
        if p == g {
            inter[p as usize] += 1;
        }
    }
    let mut per_class = Vec::with_capacity(n);
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 1..=n {
        let union = pred_count[c] + gt_count[c] - inter[c];
        if union == 0 {
            per_class.push(None);
        } else {
            let iou = inter[c] as f64 / union as f64;
            per_class.push(Some(iou));
            sum += iou;
            present += 1;
        }
    }
    let mean = if present == 0 { 0.0 } else { sum / present as f64 };
    Ok((mean, per_class))
}

/// Box average precision.
///
/// For each class present in the ground truth and each IoU threshold,
/// predictions are sorted by descending confidence (ties by input order) and
/// greedily matched to the unmatched ground-truth box of the same class with
/// the highest IoU at or above the threshold. The precision/recall curve is
/// integrated with all-point interpolation (monotone precision envelope).
/// The result is the mean over classes and thresholds; `None` when the
/// ground truth is empty.
pub fn average_precision(
    predictions: &[(BoundingBox2D, f64)],
    ground_truth: &[BoundingBox2D],
    iou_thresholds: &[f64],
) -> Option<f64> {
    if ground_truth.is_empty() {
        return None;
    }
    let mut classes: Vec<u16> = ground_truth.iter().map(|b| b.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut total = 0.0;
    let mut terms = 0usize;
    for &class in &classes {
        let gts: Vec<&BoundingBox2D> = ground_truth.iter().filter(|b| b.class_id == class).collect();
        let mut preds: Vec<(usize, &BoundingBox2D, f64)> = predictions
            .iter()
            .enumerate()
            .filter(|(_, (b, _))| b.class_id == class)
            .map(|(i, (b, c))| (i, b, *c))
            .collect();
        preds.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));

        for &threshold in iou_thresholds {
            total += ap_single(&preds, &gts, threshold);
            terms += 1;
        }
    }
    Some(total / terms as f64)
}

fn ap_single(preds: &[(usize, &BoundingBox2D, f64)], gts: &[&BoundingBox2D], threshold: f64) -> f64 {
    let mut matched = vec![false; gts.len()];
    let mut tps = Vec::with_capacity(preds.len());
    for (_, pb, _) in preds {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gb) in gts.iter().enumerate() {
            if matched[gi] {
                continue;
            }
            let iou = pb.iou(gb);
            if iou >= threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            matched[gi] = true;
            tps.push(true);
        } else {
            tps.push(false);
        }
    }
    // Precision/recall at each rank.
    let n_gt = gts.len() as f64;
    let mut tp = 0usize;
    let mut recalls = Vec::with_capacity(tps.len());
    let mut precisions = Vec::with_capacity(tps.len());
    for (rank, &is_tp) in tps.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        recalls.push(tp as f64 / n_gt);
        precisions.push(tp as f64 / (rank + 1) as f64);
    }
    // Monotone envelope from the right, integrated over recall increments.
    let mut envelope = precisions.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..recalls.len() {
        if recalls[i] > prev_recall {
            ap += (recalls[i] - prev_recall) * envelope[i];
            prev_recall = recalls[i];
        }
    }
    ap
}
