//! Model file format `texfit-model/1`.
//!
//! ```text
//! bytes 0..8      header length N, u64 little-endian
//! bytes 8..8+N    UTF-8 JSON header
//! bytes 8+N..     arrays in header order, each a row-major run of f64 LE
//! ```
//!
//! The header lists every array with its name and shape. Integer arrays
//! (faces, parents, texel faces) are stored as exactly-representable f64;
//! the root's parent is -1.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BodyModel, BodyModelParts, Texel};
use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "texfit-model/1";

#[derive(Serialize, Deserialize)]
struct Header {
    version: String,
    units: String,
    seed: u64,
    dims: Dims,
    arrays: Vec<ArrayDecl>,
}

#[derive(Serialize, Deserialize)]
struct Dims {
    vertices: usize,
    faces: usize,
    joints: usize,
    shape: usize,
    texels: usize,
}

#[derive(Serialize, Deserialize)]
struct ArrayDecl {
    name: String,
    shape: Vec<usize>,
}

const ARRAY_ORDER: [&str; 8] = [
    "template_vertices",
    "faces",
    "shape_dirs",
    "skin_weights",
    "joint_regressor",
    "parents",
    "texel_faces",
    "texel_barycentrics",
];

pub fn write_model<W: Write>(model: &BodyModel, mut out: W) -> std::io::Result<()> {
    let p = model.parts();
    let (v, f, j, s, t) = (
        model.num_vertices(),
        model.num_faces(),
        model.num_joints(),
        model.num_shape(),
        model.num_texels(),
    );
    let shapes: [Vec<usize>; 8] = [
        vec![v, 3],
        vec![f, 3],
        vec![v, 3, s],
        vec![v, j],
        vec![j, v],
        vec![j],
        vec![t],
        vec![t, 3],
    ];
    let header = Header {
        version: MODEL_VERSION.to_string(),
        units: "meters".to_string(),
        seed: p.seed,
        dims: Dims {
            vertices: v,
            faces: f,
            joints: j,
            shape: s,
            texels: t,
        },
        arrays: ARRAY_ORDER
            .iter()
            .zip(shapes)
            .map(|(name, shape)| ArrayDecl {
                name: name.to_string(),
                shape,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(std::io::Error::other)?;

    let mut data: Vec<f64> = Vec::new();
    data.extend(p.template_vertices.iter().flat_map(|x| [x.x, x.y, x.z]));
    data.extend(p.faces.iter().flat_map(|f| f.map(|i| i as f64)));
    for vi in 0..v {
        for c in 0..3 {
            for dirs in &p.shape_dirs {
                data.push(dirs[vi][c]);
            }
        }
    }
    data.extend_from_slice(&p.skin_weights);
    data.extend_from_slice(&p.joint_regressor);
    data.extend(p.parents.iter().map(|q| q.map_or(-1.0, |q| q as f64)));
    data.extend(p.texels.iter().map(|t| t.face as f64));
    data.extend(p.texels.iter().flat_map(|t| t.bary));

    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for x in data {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&bytes)
}

pub fn save_model(model: &BodyModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<BodyModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes[..])
}

fn as_index(x: f64, field: &str, bound: usize) -> Result<usize> {
    if x.fract() != 0.0 || x < 0.0 || x >= bound as f64 {
        return Err(Error::malformed_model(
            field,
            format!("{x} is not an index below {bound}"),
        ));
    }
    Ok(x as usize)
}

pub fn read_model<R: Read>(mut input: R) -> Result<BodyModel> {
    let mut raw = Vec::new();
    input
        .read_to_end(&mut raw)
        .map_err(|e| Error::malformed_model("file", e.to_string()))?;
    if raw.len() < 8 {
        return Err(Error::malformed_model("header", "truncated length prefix"));
    }
    let hlen = u64::from_le_bytes(raw[..8].try_into().unwrap()) as usize;
    let body_start = 8usize
        .checked_add(hlen)
        .filter(|&e| e <= raw.len())
        .ok_or_else(|| Error::malformed_model("header", "length exceeds file"))?;
    let header: Header = serde_json::from_slice(&raw[8..body_start])
        .map_err(|e| Error::malformed_model("header", e.to_string()))?;
    if header.version != MODEL_VERSION {
        return Err(Error::malformed_model(
            "version",
            format!("unsupported `{}`", header.version),
        ));
    }
    let names: Vec<&str> = header.arrays.iter().map(|a| a.name.as_str()).collect();
    if names != ARRAY_ORDER {
        return Err(Error::malformed_model("arrays", "unexpected array list"));
    }
    let d = &header.dims;
    let expected: [Vec<usize>; 8] = [
        vec![d.vertices, 3],
        vec![d.faces, 3],
        vec![d.vertices, 3, d.shape],
        vec![d.vertices, d.joints],
        vec![d.joints, d.vertices],
        vec![d.joints],
        vec![d.texels],
        vec![d.texels, 3],
    ];
    for (decl, exp) in header.arrays.iter().zip(&expected) {
        if &decl.shape != exp {
            return Err(Error::malformed_model(
                &decl.name,
                "shape disagrees with dims",
            ));
        }
    }

    let payload = &raw[body_start..];
    let total: usize = expected.iter().map(|s| s.iter().product::<usize>()).sum();
    if payload.len() != total * 8 {
        return Err(Error::malformed_model(
            "arrays",
            format!(
                "expected {} payload bytes, found {}",
                total * 8,
                payload.len()
            ),
        ));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let tv = take(d.vertices * 3);
    let template_vertices = tv
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect();

    let fv = take(d.faces * 3);
    let faces = fv
        .chunks_exact(3)
        .map(|c| {
            Ok([
                as_index(c[0], "faces", d.vertices)?,
                as_index(c[1], "faces", d.vertices)?,
                as_index(c[2], "faces", d.vertices)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;

    let sd = take(d.vertices * 3 * d.shape);
    let shape_dirs = (0..d.shape)
        .map(|s| {
            (0..d.vertices)
                .map(|v| {
                    let at = |c: usize| sd[(v * 3 + c) * d.shape + s];
                    Vector3::new(at(0), at(1), at(2))
                })
                .collect()
        })
        .collect();

    let skin_weights = take(d.vertices * d.joints);
    let joint_regressor = take(d.joints * d.vertices);
    let parents = take(d.joints)
        .into_iter()
        .map(|x| {
            if x == -1.0 {
                Ok(None)
            } else {
                as_index(x, "parents", d.joints).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let tf = take(d.texels);
    let tb = take(d.texels * 3);
    let texels = tf
        .iter()
        .zip(tb.chunks_exact(3))
        .map(|(&f, b)| {
            Ok(Texel {
                face: as_index(f, "texel_faces", d.faces)?,
                bary: [b[0], b[1], b[2]],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    BodyModel::from_parts(BodyModelParts {
        template_vertices,
        faces,
        shape_dirs,
        skin_weights,
        joint_regressor,
        parents,
        texels,
        seed: header.seed,
    })
}
