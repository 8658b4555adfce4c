use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModel, PoseParams};
use crate::camera::CameraParams;
use crate::error::{Error, Result};
use crate::rotation::Rot6;

/// Dimensions of a packed parameter vector. Each frame occupies one
/// contiguous block laid out as
/// `[body_rot6d (6(J-1)) | shape (S) | camera rot6d (6) | scale (1) | translation (2)]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub num_frames: usize,
    pub num_joints: usize,
    pub num_shape: usize,
}

impl ParamLayout {
    pub fn for_model(model: &BodyModel, num_frames: usize) -> Self {
        Self {
            num_frames,
            num_joints: model.num_joints(),
            num_shape: model.num_shape(),
        }
    }

    fn body_len(&self) -> usize {
        6 * (self.num_joints - 1)
    }

    pub fn per_frame(&self) -> usize {
        self.body_len() + self.num_shape + 9
    }

    pub fn len(&self) -> usize {
        self.num_frames * self.per_frame()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_range(&self, frame: usize) -> Range<usize> {
        let start = frame * self.per_frame();
        start..start + self.per_frame()
    }

    /// Offsets of the groups inside one frame block.
    pub(crate) fn shape_offset(&self) -> usize {
        self.body_len()
    }

    pub(crate) fn camera_offset(&self) -> usize {
        self.body_len() + self.num_shape
    }

    /// Human-readable name of scalar `index`, e.g. `frame1.body_rot6d.j3[4]`.
    pub fn label(&self, index: usize) -> String {
        let frame = index / self.per_frame();
        let k = index % self.per_frame();
        let body = self.body_len();
        let cam = self.camera_offset();
        let what = if k < body {
            format!("body_rot6d.j{}[{}]", k / 6 + 1, k % 6)
        } else if k < cam {
            format!("shape[{}]", k - body)
        } else if k < cam + 6 {
            format!("camera.rot6d[{}]", k - cam)
        } else if k == cam + 6 {
            "camera.scale".to_string()
        } else {
            format!("camera.translation[{}]", k - cam - 7)
        };
        format!("frame{frame}.{what}")
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// Flat vector over every frame's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn pack(model: &BodyModel, frames: &[PoseParams]) -> Result<Self> {
        let layout = ParamLayout::for_model(model, frames.len());
        let mut values = Vec::with_capacity(layout.len());
        for pose in frames {
            model.check_pose(pose)?;
            values.extend(pose.body_rot6d.iter().flatten());
            values.extend(&pose.shape);
            values.extend(&pose.camera.global_rot6d);
            values.push(pose.camera.scale);
            values.extend(&pose.camera.translation);
        }
        Ok(Self { layout, values })
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimMismatch(format!(
                "parameter vector has {} entries, layout expects {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn num_frames(&self) -> usize {
        self.layout.num_frames
    }

    pub fn frame(&self, f: usize) -> PoseParams {
        let l = &self.layout;
        let block = &self.values[l.frame_range(f)];
        let body_rot6d = block[..l.body_len()]
            .chunks_exact(6)
            .map(|c| <Rot6>::try_from(c).unwrap())
            .collect();
        let shape = block[l.shape_offset()..l.camera_offset()].to_vec();
        let c = &block[l.camera_offset()..];
        PoseParams {
            body_rot6d,
            shape,
            camera: CameraParams {
                global_rot6d: <Rot6>::try_from(&c[..6]).unwrap(),
                scale: c[6],
                translation: [c[7], c[8]],
            },
        }
    }

    pub fn unpack(&self) -> Vec<PoseParams> {
        (0..self.num_frames()).map(|f| self.frame(f)).collect()
    }

    /// Writes a per-frame gradient block into a flat gradient vector.
    pub(crate) fn write_frame_grad(
        layout: &ParamLayout,
        grad: &mut [f64],
        f: usize,
        d_body: &[Rot6],
        d_shape: &[f64],
        d_camera: &CameraParams,
    ) {
        let block = &mut grad[layout.frame_range(f)];
        for (dst, src) in block[..layout.body_len()]
            .iter_mut()
            .zip(d_body.iter().flatten())
        {
            *dst = *src;
        }
        block[layout.shape_offset()..layout.camera_offset()].copy_from_slice(d_shape);
        let c = &mut block[layout.camera_offset()..];
        c[..6].copy_from_slice(&d_camera.global_rot6d);
        c[6] = d_camera.scale;
        c[7] = d_camera.translation[0];
        c[8] = d_camera.translation[1];
    }
}
