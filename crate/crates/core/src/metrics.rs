//! Pose and segmentation metrics: MPJPE, scale-normalized MPJPE,
//! similarity-aligned reconstruction error, and silhouette accuracy/f1.
//!
//! Every pose metric reports the mean per-joint Euclidean distance under
//! the alignment that minimizes that same mean, over a nested family of
//! alignments (translation via the root, plus scale, plus rotation), so
//! `rec_error <= nmpjpe <= mpjpe` holds by construction.

use std::ops::AddAssign;

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::body_model::{lbs, regress_joints, BodyModel, PoseParams};
use crate::error::{Error, Result};
use crate::render::Mask;

pub const ROOT_JOINT: usize = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseMetrics {
    pub mpjpe: f64,
    pub nmpjpe: f64,
    pub rec_error: f64,
}

impl PoseMetrics {
    pub fn compute(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Self> {
        Ok(Self {
            mpjpe: mpjpe(pred, gt)?,
            nmpjpe: nmpjpe(pred, gt)?,
            rec_error: procrustes_rec_error(pred, gt)?,
        })
    }

    pub fn mean(items: &[PoseMetrics]) -> Self {
        let n = items.len().max(1) as f64;
        items.iter().fold(Self::default(), |a, m| Self {
            mpjpe: a.mpjpe + m.mpjpe / n,
            nmpjpe: a.nmpjpe + m.nmpjpe / n,
            rec_error: a.rec_error + m.rec_error / n,
        })
    }
}

fn check(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimMismatch(format!(
            "joint sets of size {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

fn mean_dist(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}

fn root_centred(x: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    x.iter().map(|p| p - x[ROOT_JOINT]).collect()
}

pub fn mpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check(pred, gt)?;
    Ok(mean_dist(&root_centred(pred), &root_centred(gt)))
}

/// Scale of root-centred `pred` minimizing the mean joint distance to `gt`.
fn optimal_scale(p: &[Vector3<f64>], g: &[Vector3<f64>]) -> f64 {
    let f = |s: f64| {
        p.iter()
            .zip(g)
            .map(|(x, y)| (s * x - y).norm())
            .sum::<f64>()
    };
    let pp: f64 = p.iter().map(|x| x.norm_squared()).sum();
    if pp == 0.0 {
        return 1.0;
    }
    let pg: f64 = p.iter().zip(g).map(|(x, y)| x.dot(y)).sum();
    // f is convex with f(s) >= s * sum|p| - sum|g|, so the minimizer lies in
    // [0, 2 * sum|g| / sum|p|].
    let np: f64 = p.iter().map(|x| x.norm()).sum();
    let ng: f64 = g.iter().map(|x| x.norm()).sum();
    let (mut lo, mut hi) = (0.0, 2.0 * ng / np);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut best = 0.5 * (lo + hi);
    for s in [1.0, (pg / pp).max(0.0)] {
        if f(s) < f(best) {
            best = s;
        }
    }
    best
}

pub fn nmpjpe(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    check(pred, gt)?;
    let p = root_centred(pred);
    let g = root_centred(gt);
    let s = optimal_scale(&p, &g);
    let scaled: Vec<_> = p.iter().map(|x| s * x).collect();
    Ok(mean_dist(&scaled, &g))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub rotation: Matrix3<f64>,
    pub scale: f64,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * x) + self.translation
    }
}

/// Weighted least-squares similarity from `p` onto `g`, reflections
/// excluded. With an anchor `j` the similarity maps `p[j]` exactly onto
/// `g[j]` and the remaining points are fitted about it.
fn weighted_umeyama(
    p: &[Vector3<f64>],
    g: &[Vector3<f64>],
    w: &[f64],
    anchor: Option<usize>,
) -> Similarity {
    let (mp, mg) = match anchor {
        Some(j) => (p[j], g[j]),
        None => {
            let wsum: f64 = w.iter().sum();
            (
                p.iter().zip(w).map(|(x, w)| *w * x).sum::<Vector3<f64>>() / wsum,
                g.iter().zip(w).map(|(x, w)| *w * x).sum::<Vector3<f64>>() / wsum,
            )
        }
    };
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (i, ((x, y), w)) in p.iter().zip(g).zip(w).enumerate() {
        if anchor == Some(i) {
            continue;
        }
        let (dx, dy) = (x - mp, y - mg);
        cov += *w * dy * dx.transpose();
        var += w * dx.norm_squared();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = if (u * vt).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let sign = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = u * sign * vt;
    let sv = svd.singular_values;
    let scale = if var > 0.0 {
        ((sv[0] + sv[1] + d * sv[2]) / var).max(0.0)
    } else {
        1.0
    };
    Similarity {
        rotation,
        scale,
        translation: mg - scale * rotation * mp,
    }
}

fn collinear(x: &[Vector3<f64>]) -> bool {
    let n = x.len() as f64;
    let m = x.iter().sum::<Vector3<f64>>() / n;
    let cov = x
        .iter()
        .fold(Matrix3::zeros(), |c, p| c + (p - m) * (p - m).transpose());
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Eigenvectors of the point covariance as a proper rotation.
fn principal_frame(x: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<Vector3<f64>>() / n;
    let cov = x
        .iter()
        .fold(Matrix3::zeros(), |c, p| c + (p - m) * (p - m).transpose());
    let mut f = cov.symmetric_eigen().eigenvectors;
    if f.determinant() < 0.0 {
        f.set_column(2, &(-f.column(2)));
    }
    f
}

/// Rotations about the directions of the integer vectors in [-2, 2]^3 by
/// multiples of a quarter half-turn, plus the identity. The set is closed
/// under sign flips of the axis components.
fn rotation_grid() -> Vec<Matrix3<f64>> {
    let mut axes: Vec<Vector3<f64>> = Vec::new();
    for i in -2i32..=2 {
        for j in -2i32..=2 {
            for k in -2i32..=2 {
                let v = Vector3::new(i as f64, j as f64, k as f64);
                let first = [i, j, k].into_iter().find(|c| *c != 0);
                if first.is_some_and(|c| c > 0) {
                    let v = v.normalize();
                    if !axes.iter().any(|a| (a - v).norm() < 1e-12) {
                        axes.push(v);
                    }
                }
            }
        }
    }
    let mut out = vec![Matrix3::identity()];
    for a in &axes {
        for q in [-3, -2, -1, 1, 2, 3, 4] {
            let angle = q as f64 * std::f64::consts::FRAC_PI_4;
            out.push(Rotation3::from_axis_angle(&Unit::new_unchecked(*a), angle).into_inner());
        }
    }
    out
}

/// Least-squares scale and translation for a fixed rotation.
fn fit_scale_translation(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    rotation: Matrix3<f64>,
) -> Similarity {
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<Vector3<f64>>() / n;
    let mg = gt.iter().sum::<Vector3<f64>>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in pred.iter().zip(gt) {
        let rx = rotation * (x - mp);
        num += rx.dot(&(y - mg));
        den += rx.norm_squared();
    }
    let scale = if den > 0.0 { (num / den).max(0.0) } else { 1.0 };
    Similarity {
        rotation,
        scale,
        translation: mg - scale * rotation * mp,
    }
}

type M7 = SMatrix<f64, 7, 7>;

/// Quasi-Newton descent on the total distance from `start`, staying in the
/// start's basin. The similarity is moved as `x -> s R (x - m) + c` about
/// the centroid `m` of `pred`, over a rotation increment, log-scale and `c`.
fn local_descent(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    start: Similarity,
    max_iters: usize,
) -> (Similarity, f64) {
    let n = pred.len() as f64;
    let m = pred.iter().sum::<Vector3<f64>>() / n;
    let grad = |s: &Similarity| {
        let mut g = SVector::<f64, 7>::zeros();
        for (x, y) in pred.iter().zip(gt) {
            let r = s.apply(x) - y;
            let norm = r.norm();
            if norm == 0.0 {
                continue;
            }
            let u = r / norm;
            let d = x - m;
            let w = s.scale * d.cross(&(s.rotation.transpose() * u));
            g.fixed_rows_mut::<3>(0).add_assign(&w);
            g[3] += s.scale * u.dot(&(s.rotation * d));
            g.fixed_rows_mut::<3>(4).add_assign(&u);
        }
        g
    };
    let step = |s: &Similarity, v: &SVector<f64, 7>| {
        let rotation = s.rotation * Rotation3::new(v.fixed_rows::<3>(0).into_owned()).into_inner();
        let scale = s.scale * v[3].exp();
        let c = s.apply(&m) + v.fixed_rows::<3>(4);
        Similarity {
            rotation,
            scale,
            translation: c - scale * rotation * m,
        }
    };
    let mut cur = start;
    let mut cost = total_dist(pred, gt, &cur);
    let mut g = grad(&cur);
    let mut h = M7::identity();
    for _ in 0..max_iters {
        let dir = -(h * g);
        let slope = g.dot(&dir);
        if !(slope < 0.0) {
            if h == M7::identity() {
                break;
            }
            h = M7::identity();
            continue;
        }
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = step(&cur, &(alpha * dir));
            let c = total_dist(pred, gt, &cand);
            if c <= cost + 1e-4 * alpha * slope {
                next = Some((cand, c));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, c)) = next else { break };
        let gain = cost - c;
        let g_new = grad(&cand);
        let sk = alpha * dir;
        let yk = g_new - g;
        let sy = sk.dot(&yk);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = M7::identity();
            h = (i - rho * sk * yk.transpose()) * h * (i - rho * yk * sk.transpose())
                + rho * sk * sk.transpose();
        }
        cur = cand;
        cost = c;
        g = g_new;
        if gain <= 1e-16 * cost {
            break;
        }
    }
    (cur, cost)
}

fn total_dist(pred: &[Vector3<f64>], gt: &[Vector3<f64>], s: &Similarity) -> f64 {
    pred.iter()
        .zip(gt)
        .map(|(x, y)| (s.apply(x) - y).norm())
        .sum()
}

/// Iteratively reweighted Procrustes from `start`, which must satisfy the
/// anchor if one is given. Each step is a majorize-minimize step, so the
/// cost never increases.
fn irls(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    start: Similarity,
    anchor: Option<usize>,
    max_iters: usize,
) -> (Similarity, f64) {
    let mut cur = start;
    let mut cur_cost = total_dist(pred, gt, &cur);
    for _ in 0..max_iters {
        let w: Vec<f64> = pred
            .iter()
            .zip(gt)
            .map(|(x, y)| 1.0 / (cur.apply(x) - y).norm().max(1e-300))
            .collect();
        let next = weighted_umeyama(pred, gt, &w, anchor);
        let c = total_dist(pred, gt, &next);
        if !(c < cur_cost) {
            break;
        }
        let gain = cur_cost - c;
        cur = next;
        cur_cost = c;
        if gain <= 1e-16 * cur_cost {
            break;
        }
    }
    (cur, cur_cost)
}

/// Best similarity mapping `pred[j]` onto `gt[j]` and `pred[l]` onto
/// `gt[l]` exactly. Scale and the rotation axis are fixed by the pair,
/// leaving the angle about that axis to a scan and golden-section search.
fn pair_anchored(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    j: usize,
    l: usize,
) -> Option<(Similarity, f64)> {
    let p = pred[l] - pred[j];
    let q = gt[l] - gt[j];
    if p.norm() < 1e-12 || q.norm() < 1e-12 {
        return None;
    }
    let scale = q.norm() / p.norm();
    let base = Rotation3::rotation_between(&p, &q).unwrap_or_else(|| {
        // Antiparallel: half turn about any axis perpendicular to p.
        let e = if p.x.abs() < p.y.abs().min(p.z.abs()) {
            Vector3::x()
        } else if p.y.abs() < p.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        Rotation3::from_axis_angle(&Unit::new_normalize(p.cross(&e)), std::f64::consts::PI)
    });
    let axis = Unit::new_normalize(q);
    let at = |theta: f64| {
        let rotation = (Rotation3::from_axis_angle(&axis, theta) * base).into_inner();
        let s = Similarity {
            rotation,
            scale,
            translation: gt[j] - scale * rotation * pred[j],
        };
        (s, total_dist(pred, gt, &s))
    };
    let n = 360;
    let step = std::f64::consts::TAU / n as f64;
    let k = (0..n)
        .map(|i| (i, at(i as f64 * step).1))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    let (mut lo, mut hi) = ((k as f64 - 1.0) * step, (k as f64 + 1.0) * step);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fa, mut fb) = (at(a).1, at(b).1);
    while hi - lo > 1e-13 {
        if fa <= fb {
            hi = b;
            (b, fb) = (a, fa);
            a = hi - r * (hi - lo);
            fa = at(a).1;
        } else {
            lo = a;
            (a, fa) = (b, fb);
            b = lo + r * (hi - lo);
            fb = at(b).1;
        }
    }
    Some(at(0.5 * (lo + hi)))
}

/// Similarity alignment of `pred` onto `gt` minimizing the mean joint
/// distance.
///
/// The cost is not convex in the rotation and its minimizer often maps one
/// or two joints exactly, where plain reweighting stalls. Candidates come
/// from reweighted Procrustes started at the least-squares fit and the
/// scale-only alignment, from quasi-Newton descent over a rotation grid,
/// from runs constrained through each joint, and from full rotation scans
/// through joint pairs. A last pair search around the winner's best-fitting
/// joints resolves minimizers at exact matches. Every start except the
/// scale-only one moves with the data, so the result is similarity
/// invariant.
pub fn procrustes_align(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<Similarity> {
    check(pred, gt)?;
    if pred.len() < 3 || collinear(pred) || collinear(gt) {
        return Err(Error::DegenerateConfiguration(
            "joints are collinear or too few for a unique rotation",
        ));
    }
    let n = pred.len();
    let ones = vec![1.0; n];
    let s = optimal_scale(&root_centred(pred), &root_centred(gt));
    let scale_only = Similarity {
        rotation: Matrix3::identity(),
        scale: s,
        translation: gt[ROOT_JOINT] - s * pred[ROOT_JOINT],
    };

    let mut candidates = vec![
        irls(
            pred,
            gt,
            weighted_umeyama(pred, gt, &ones, None),
            None,
            5000,
        ),
        irls(pred, gt, scale_only, None, 5000),
    ];
    for j in 0..n {
        candidates.push(irls(
            pred,
            gt,
            weighted_umeyama(pred, gt, &ones, Some(j)),
            Some(j),
            5000,
        ));
    }
    // Rotation grid about the least-squares fit, in the principal frame of
    // `pred` so the set of starts moves with the data.
    let ls = weighted_umeyama(pred, gt, &ones, None);
    let frame = principal_frame(pred);
    let mut grid: Vec<(Similarity, f64)> = rotation_grid()
        .iter()
        .map(|g| {
            let s = fit_scale_translation(pred, gt, ls.rotation * frame * g * frame.transpose());
            local_descent(pred, gt, s, 20)
        })
        .collect();
    grid.sort_by(|a, b| a.1.total_cmp(&b.1));
    for g in grid.iter().take(6) {
        let (s, _) = local_descent(pred, gt, g.0, 500);
        candidates.push(irls(pred, gt, s, None, 5000));
    }

    let mut pairs: Vec<(Similarity, f64)> = (0..n)
        .flat_map(|j| (j + 1..n).filter_map(move |l| pair_anchored(pred, gt, j, l)))
        .collect();
    pairs.sort_by(|a, b| a.1.total_cmp(&b.1));
    for p in pairs.iter().take(3) {
        candidates.push(irls(pred, gt, p.0, None, 5000));
    }
    candidates.extend(pairs.into_iter().take(1));
    let mut best = candidates
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    // Exact matches at the winner: refine through its best-fitting pairs.
    let mut order: Vec<(f64, usize)> = pred
        .iter()
        .zip(gt)
        .map(|(x, y)| (best.0.apply(x) - y).norm())
        .zip(0..n)
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let near: Vec<usize> = order.iter().take(3).map(|o| o.1).collect();
    for (a, &j) in near.iter().enumerate() {
        for &l in &near[a + 1..] {
            if let Some(c) = pair_anchored(pred, gt, j, l) {
                if c.1 < best.1 {
                    best = c;
                }
            }
        }
    }
    Ok(best.0)
}

pub fn procrustes_rec_error(pred: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<f64> {
    let s = procrustes_align(pred, gt)?;
    let aligned: Vec<_> = pred.iter().map(|x| s.apply(x)).collect();
    Ok(mean_dist(&aligned, gt))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteMetrics {
    pub accuracy: f64,
    pub f1: f64,
}

pub fn silhouette_metrics(pred: &Mask, gt: &Mask) -> Result<SilhouetteMetrics> {
    if pred.width != gt.width || pred.height != gt.height || pred.data.len() != gt.data.len() {
        return Err(Error::DimMismatch(format!(
            "masks {}x{} and {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let (mut tp, mut fp, mut fn_, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
        agree += (p == g) as usize;
    }
    let n = pred.data.len().max(1) as f64;
    let denom = 2 * tp + fp + fn_;
    Ok(SilhouetteMetrics {
        accuracy: agree as f64 / n,
        f1: if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        },
    })
}

/// Regressed joints rotated into the camera's view orientation (unscaled,
/// in model units), the frame in which pose errors are measured.
pub fn view_joints(model: &BodyModel, pose: &PoseParams) -> Result<Vec<Vector3<f64>>> {
    let mesh = lbs(pose, model)?;
    let cam = pose.camera.resolve()?;
    Ok(regress_joints(&mesh, model)?
        .iter()
        .map(|x| cam.rotation * x)
        .collect())
}
