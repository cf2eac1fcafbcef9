//! Matting evaluation metrics. SAD-family values and the connectivity
//! error carry the standard benchmark /1000 scaling; MSE and MAD are plain
//! means. Region membership is decided on the 8-bit quantization of the
//! ground truth.

use zippo_core::pixel::quantize8;
use zippo_core::AlphaMatte;

use crate::error::{Error, Result};

/// Boolean pixel mask with matte dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<BinaryMask> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "mask {}x{} wants {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(BinaryMask { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> BinaryMask {
        let mut data = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                data[y * width + x] = f(x, y);
            }
        }
        BinaryMask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

fn check_dims(pred: &AlphaMatte, gt: &AlphaMatte, op: &'static str) -> Result<()> {
    if !pred.same_dims(gt) {
        return Err(Error::invalid(format!(
            "{}: dims {}x{} vs {}x{}",
            op,
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    Ok(())
}

/// Region selector over the 8-bit quantized ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Exactly 255 after quantization.
    Fg,
    /// Exactly 0 after quantization.
    Bg,
    /// Everything in between.
    Transition,
}

fn in_region(gt_value: f32, region: Region) -> bool {
    let q = quantize8(gt_value);
    match region {
        Region::Fg => q == 255,
        Region::Bg => q == 0,
        Region::Transition => q != 0 && q != 255,
    }
}

/// Sum of absolute differences, scaled by the benchmark's 1/1000.
pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt, "sad")?;
    let mut acc = 0.0f64;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        acc += (*p as f64 - *g as f64).abs();
    }
    Ok(acc / 1000.0)
}

/// Plain mean of squared differences.
pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt, "mse")?;
    let mut acc = 0.0f64;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        let d = *p as f64 - *g as f64;
        acc += d * d;
    }
    Ok(acc / pred.data().len() as f64)
}

/// Plain mean of absolute differences.
pub fn mad(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt, "mad")?;
    let mut acc = 0.0f64;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        acc += (*p as f64 - *g as f64).abs();
    }
    Ok(acc / pred.data().len() as f64)
}

/// SAD restricted to a ground-truth region (/1000). An empty region gives
/// 0; the zero pixel count is visible in [`MetricReport`].
pub fn region_sad(pred: &AlphaMatte, gt: &AlphaMatte, region: Region) -> Result<f64> {
    check_dims(pred, gt, "region_sad")?;
    let mut acc = 0.0f64;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        if in_region(*g, region) {
            acc += (*p as f64 - *g as f64).abs();
        }
    }
    Ok(acc / 1000.0)
}

pub fn region_pixel_count(gt: &AlphaMatte, region: Region) -> usize {
    gt.data().iter().filter(|g| in_region(**g, region)).count()
}

/// Intersection over union; defined as 1 when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::invalid(format!(
            "iou: dims {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.data.iter().zip(&b.data) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy)]
pub struct ConnParams {
    pub theta_step: f64,
    pub phi_threshold: f64,
}

impl Default for ConnParams {
    fn default() -> Self {
        ConnParams {
            theta_step: 0.1,
            phi_threshold: 0.15,
        }
    }
}

/// Half an 8-bit level: the opacity cutoff for the source region.
const EPS_8BIT: f64 = 0.5 / 255.0;

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Union by size; returns the surviving root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }
}

/// Largest 4-connected component of the mutually-opaque source region;
/// ties broken by the smallest row-major pixel index in the component.
fn source_region(pred: &AlphaMatte, gt: &AlphaMatte) -> Vec<bool> {
    let (w, h) = (pred.width(), pred.height());
    let opaque: Vec<bool> = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| *p as f64 >= 1.0 - EPS_8BIT && *g as f64 >= 1.0 - EPS_8BIT)
        .collect();
    let mut uf = UnionFind::new(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !opaque[i] {
                continue;
            }
            if x + 1 < w && opaque[i + 1] {
                uf.union(i, i + 1);
            }
            if y + 1 < h && opaque[i + w] {
                uf.union(i, i + w);
            }
        }
    }
    // roots -> (size, min index)
    let mut best: Option<(usize, usize, usize)> = None; // (size, min_idx, root)
    let mut min_idx = vec![usize::MAX; w * h];
    let mut sizes = vec![0usize; w * h];
    for i in 0..w * h {
        if !opaque[i] {
            continue;
        }
        let r = uf.find(i);
        sizes[r] += 1;
        if min_idx[r] == usize::MAX {
            min_idx[r] = i;
        }
    }
    for i in 0..w * h {
        if opaque[i] && uf.find(i) == i {
            let cand = (sizes[i], min_idx[i], i);
            best = Some(match best {
                None => cand,
                Some(b) => {
                    if cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1) {
                        cand
                    } else {
                        b
                    }
                }
            });
        }
    }
    let mut omega = vec![false; w * h];
    if let Some((_, _, root)) = best {
        for i in 0..w * h {
            if opaque[i] && uf.find(i) == root {
                omega[i] = true;
            }
        }
    }
    omega
}

/// Per-pixel largest theta level at which the pixel sits in a component of
/// `{m >= theta}` touching the source region. Processes levels in
/// descending order over an incremental union-find; components pick up
/// their source contact lazily and drain their pending members when they
/// do.
fn connectivity_levels(m: &AlphaMatte, omega: &[bool], thetas: &[f64]) -> Vec<f64> {
    let (w, h) = (m.width(), m.height());
    let n = w * h;
    let mut levels = vec![0.0f64; n];
    if !omega.iter().any(|&o| o) {
        return levels;
    }
    // Highest level index at which each pixel is active.
    let enter_level: Vec<usize> = m
        .data()
        .iter()
        .map(|&v| {
            let v = v as f64;
            // thetas ascending; the largest k with thetas[k] <= v
            match thetas.iter().rposition(|&t| t <= v) {
                Some(k) => k,
                None => 0, // theta_0 = 0 <= v always; unreachable
            }
        })
        .collect();
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); thetas.len()];
    for (i, &k) in enter_level.iter().enumerate() {
        by_level[k].push(i);
    }

    let mut uf = UnionFind::new(n);
    let mut active = vec![false; n];
    let mut touched = vec![false; n]; // per current root
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); n];

    for k in (0..thetas.len()).rev() {
        let theta = thetas[k];
        for &i in &by_level[k] {
            active[i] = true;
            if omega[i] {
                touched[i] = true;
                levels[i] = theta;
            } else {
                pending[i].push(i);
            }
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for nb in neighbours.into_iter().flatten() {
                if !active[nb] {
                    continue;
                }
                let ra = uf.find(i);
                let rb = uf.find(nb);
                if ra == rb {
                    continue;
                }
                let merged_touch = touched[ra] || touched[rb];
                let root = uf.union(ra, rb);
                let other = if root == ra { rb } else { ra };
                if merged_touch {
                    // drain everything still pending under both old roots
                    for &p in pending[ra].iter().chain(pending[rb].iter()) {
                        levels[p] = theta;
                    }
                    pending[ra].clear();
                    pending[rb].clear();
                    touched[root] = true;
                } else {
                    let mut moved = std::mem::take(&mut pending[other]);
                    pending[root].append(&mut moved);
                }
            }
            // the new pixel might have joined a touched component
            let r = uf.find(i);
            if touched[r] {
                for &p in pending[r].iter() {
                    levels[p] = theta;
                }
                pending[r].clear();
                if !omega[i] {
                    levels[i] = theta;
                }
            }
        }
    }
    levels
}

#[derive(Debug, Clone, Copy)]
pub struct ConnOutcome {
    pub value: f64,
    /// True when the mutually-opaque source region was empty; all
    /// connectivity levels are 0 in that case.
    pub degenerate: bool,
}

/// Connectivity error: compares per-pixel opacity degradation relative to
/// the largest mutually-opaque region between prediction and ground truth.
pub fn conn_detailed(pred: &AlphaMatte, gt: &AlphaMatte, params: &ConnParams) -> Result<ConnOutcome> {
    check_dims(pred, gt, "conn")?;
    if !(params.theta_step > 0.0 && params.theta_step <= 1.0) {
        return Err(Error::invalid(format!(
            "conn: theta_step {} outside (0, 1]",
            params.theta_step
        )));
    }
    let mut thetas = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * params.theta_step;
        if t > 1.0 + 1e-12 {
            break;
        }
        thetas.push(t.min(1.0));
        k += 1;
    }
    let omega = source_region(pred, gt);
    let degenerate = !omega.iter().any(|&o| o);
    let lp = connectivity_levels(pred, &omega, &thetas);
    let lg = connectivity_levels(gt, &omega, &thetas);
    let mut acc = 0.0f64;
    for i in 0..lp.len() {
        let phi = |m: f32, l: f64| {
            let d = (m as f64 - l).max(0.0);
            1.0 - d * f64::from(d >= params.phi_threshold)
        };
        let pp = phi(pred.data()[i], lp[i]);
        let pg = phi(gt.data()[i], lg[i]);
        acc += (pp - pg).abs();
    }
    Ok(ConnOutcome {
        value: acc / 1000.0,
        degenerate,
    })
}

pub fn conn(pred: &AlphaMatte, gt: &AlphaMatte, params: &ConnParams) -> Result<f64> {
    Ok(conn_detailed(pred, gt, params)?.value)
}

/// All metrics over one pair, with region pixel counts.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub sad: f64,
    pub mse: f64,
    pub mad: f64,
    pub sad_fg: f64,
    pub sad_bg: f64,
    pub conn: f64,
    pub fg_pixels: usize,
    pub bg_pixels: usize,
    pub transition_pixels: usize,
    pub conn_degenerate: bool,
}

pub fn report(pred: &AlphaMatte, gt: &AlphaMatte, params: &ConnParams) -> Result<MetricReport> {
    let conn_out = conn_detailed(pred, gt, params)?;
    Ok(MetricReport {
        sad: sad(pred, gt)?,
        mse: mse(pred, gt)?,
        mad: mad(pred, gt)?,
        sad_fg: region_sad(pred, gt, Region::Fg)?,
        sad_bg: region_sad(pred, gt, Region::Bg)?,
        conn: conn_out.value,
        fg_pixels: region_pixel_count(gt, Region::Fg),
        bg_pixels: region_pixel_count(gt, Region::Bg),
        transition_pixels: region_pixel_count(gt, Region::Transition),
        conn_degenerate: conn_out.degenerate,
    })
}
