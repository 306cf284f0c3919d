//! JSON documents: factored scenes, rotation-bin sets and proposal lists.
//!
//! A scene stores each object shape either inline (base64 of the FVOX
//! encoding) or as a path to an FVOX file, and the layout either inline
//! (base64 of little-endian f64 disparities) or as a path to a disparity
//! PFM. Paths resolve relative to the document's directory. Inline storage
//! is lossless; a PFM layout is rounded to f32.

use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::fvox::{decode_fvox, encode_fvox, save_fvox};
use super::pfm::{decode_pfm, encode_pfm};
use super::{atomic_write, parse_json, read_file, FormatError};
use crate::bins::BinSet;
use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose, UnitQuaternion, Vec3};
use crate::scene::{Box2d, FactoredScene, Layout, ObjectClass, SceneObject};
use crate::voxel::Cuboid;

pub const SCENE_FORMAT: &str = "factored-scene";
pub const SCENE_FORMAT_VERSION: u64 = 1;
pub const BINS_FORMAT: &str = "rotation-bins";
pub const BINS_FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    format: String,
    version: u64,
    camera: Camera,
    #[serde(default)]
    room: Option<Cuboid>,
    #[serde(default)]
    layout: Option<LayoutRef>,
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum LayoutRef {
    Inline(InlineLayout),
    Path(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineLayout {
    width: usize,
    height: usize,
    disparity: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ShapeRef {
    Inline(String),
    Path(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    scale: [f64; 3],
    rotation: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    #[serde(default)]
    class: Option<ObjectClass>,
    score: f64,
    #[serde(default)]
    box2d: Option<Box2d>,
    pose: PoseDoc,
    shape: ShapeRef,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    primitives: Vec<Cuboid>,
}

/// Where `save_scene` puts object shapes and the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneEncoding {
    /// Everything embedded in the JSON document.
    Inline,
    /// Sidecar files `<stem>.layout.pfm` and `<stem>.obj<i>.fvox` beside the
    /// document.
    External { stem: String },
}

fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn pose_doc(p: &Pose) -> PoseDoc {
    PoseDoc {
        scale: (*p.scale()).into(),
        rotation: p.rotation().to_array(),
        translation: (*p.translation()).into(),
    }
}

fn build_doc(scene: &FactoredScene, mut shape_ref: impl FnMut(usize, &SceneObject) -> Result<ShapeRef>, layout: Option<LayoutRef>) -> Result<SceneDoc> {
    let objects = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(ObjectDoc {
                class: o.class,
                score: o.score(),
                box2d: o.box2d,
                pose: pose_doc(&o.pose),
                shape: shape_ref(i, o)?,
                primitives: o.primitives.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneDoc {
        format: SCENE_FORMAT.into(),
        version: SCENE_FORMAT_VERSION,
        camera: scene.camera,
        room: scene.room,
        layout,
        objects,
    })
}

fn inline_layout(l: &Layout) -> LayoutRef {
    LayoutRef::Inline(InlineLayout {
        width: l.width(),
        height: l.height(),
        disparity: encode_f64s(l.disparity()),
    })
}

fn to_text(doc: &SceneDoc) -> Result<String> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Error::arg(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Self-contained JSON text of a scene.
pub fn scene_to_json(scene: &FactoredScene) -> Result<String> {
    scene.validate()?;
    let doc = build_doc(
        scene,
        |_, o| Ok(ShapeRef::Inline(B64.encode(encode_fvox(o.shape())))),
        scene.layout.as_ref().map(inline_layout),
    )?;
    to_text(&doc)
}

pub fn save_scene(path: &Path, scene: &FactoredScene, encoding: &SceneEncoding) -> Result<()> {
    let text = match encoding {
        SceneEncoding::Inline => scene_to_json(scene)?,
        SceneEncoding::External { stem } => {
            scene.validate()?;
            let dir = path.parent().unwrap_or(Path::new(""));
            let layout = match &scene.layout {
                Some(l) => {
                    let name = format!("{stem}.layout.pfm");
                    atomic_write(&dir.join(&name), &encode_pfm(l.width(), l.height(), l.disparity()))?;
                    Some(LayoutRef::Path(name))
                }
                None => None,
            };
            let doc = build_doc(
                scene,
                |i, o| {
                    let name = format!("{stem}.obj{i}.fvox");
                    save_fvox(&dir.join(&name), o.shape())?;
                    Ok(ShapeRef::Path(name))
                },
                layout,
            )?;
            to_text(&doc)?
        }
    };
    atomic_write(path, text.as_bytes())
}

pub fn load_scene(path: &Path) -> Result<FactoredScene> {
    let bytes = read_file(path)?;
    parse_scene(&bytes, path.parent())
}

fn read_reference(base: Option<&Path>, location: &str, rel: &str) -> std::result::Result<Vec<u8>, FormatError> {
    let reference = |msg: String| FormatError::Reference {
        location: location.into(),
        path: rel.into(),
        msg,
    };
    let base = base.ok_or_else(|| reference("no base directory to resolve against".into()))?;
    let full: PathBuf = base.join(rel);
    std::fs::read(&full).map_err(|e| reference(e.to_string()))
}

fn check_header(value: &Value, format: &str, version: u64, what: &'static str) -> Result<()> {
    let found_format = value.get("format").and_then(Value::as_str);
    if found_format != Some(format) {
        return Err(FormatError::field("format", format!("expected {format:?}, found {:?}", value.get("format"))).into());
    }
    match value.get("version") {
        Some(v) if v.as_u64() == Some(version) => Ok(()),
        Some(v) => Err(FormatError::UnsupportedVersion {
            what,
            found: v.to_string(),
            location: "version".into(),
        }
        .into()),
        None => Err(FormatError::field("version", "missing").into()),
    }
}

/// Parses a scene document. Syntax errors, an unknown version, malformed
/// fields and unresolvable references are reported as distinct
/// `FormatError` variants. `base` resolves path references.
pub fn parse_scene(bytes: &[u8], base: Option<&Path>) -> Result<FactoredScene> {
    let value: Value = parse_json(bytes)?;
    check_header(&value, SCENE_FORMAT, SCENE_FORMAT_VERSION, "scene")?;
    let doc: SceneDoc = parse_json(bytes)?;

    let layout = match doc.layout {
        None => None,
        Some(LayoutRef::Inline(l)) => {
            let loc = "layout.inline";
            let raw = B64.decode(&l.disparity).map_err(|e| FormatError::field(format!("{loc}.disparity"), e))?;
            if raw.len() != 8 * l.width * l.height {
                return Err(FormatError::field(
                    format!("{loc}.disparity"),
                    format!("{} bytes for a {}x{} layout", raw.len(), l.width, l.height),
                )
                .into());
            }
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Some(Layout::new(l.width, l.height, values).map_err(|e| FormatError::field(loc, e))?)
        }
        Some(LayoutRef::Path(rel)) => {
            let loc = "layout.path";
            let raw = read_reference(base, loc, &rel)?;
            let img = decode_pfm(&raw).map_err(|e| FormatError::Reference {
                location: loc.into(),
                path: rel.clone(),
                msg: e.to_string(),
            })?;
            let values = img.data.iter().map(|&v| v as f64).collect();
            Some(Layout::new(img.width, img.height, values).map_err(|e| FormatError::field(loc, e))?)
        }
    };

    let mut objects = Vec::with_capacity(doc.objects.len());
    for (i, o) in doc.objects.into_iter().enumerate() {
        let at = |field: &str| format!("objects[{i}].{field}");
        let shape = match o.shape {
            ShapeRef::Inline(s) => {
                let raw = B64.decode(&s).map_err(|e| FormatError::field(at("shape.inline"), e))?;
                decode_fvox(&raw).map_err(|e| FormatError::field(at("shape.inline"), e))?
            }
            ShapeRef::Path(rel) => {
                let loc = at("shape.path");
                let raw = read_reference(base, &loc, &rel)?;
                decode_fvox(&raw).map_err(|e| FormatError::Reference {
                    location: loc.clone(),
                    path: rel.clone(),
                    msg: e.to_string(),
                })?
            }
        };
        let [w, x, y, z] = o.pose.rotation;
        let rotation = UnitQuaternion::new(w, x, y, z).map_err(|e| FormatError::field(at("pose.rotation"), e))?;
        let pose = Pose::new(Vec3::from(o.pose.scale), rotation, Vec3::from(o.pose.translation))
            .map_err(|e| FormatError::field(at("pose"), e))?;
        let mut obj = SceneObject::new(shape, pose, o.score).map_err(|e| FormatError::field(at("score"), e))?;
        obj.class = o.class;
        obj.box2d = o.box2d;
        obj.primitives = o.primitives;
        objects.push(obj);
    }

    let scene = FactoredScene {
        camera: doc.camera,
        layout,
        room: doc.room,
        objects,
    };
    scene.validate().map_err(|e| FormatError::field("$", e))?;
    Ok(scene)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinsDoc {
    format: String,
    version: u64,
    seed: u64,
    metric: String,
    inertia: f64,
    inertia_history: Vec<f64>,
    representatives: Vec<[f64; 4]>,
}

const BINS_METRIC: &str = "sign-folded-euclidean";

pub fn bins_to_json(bins: &BinSet) -> Result<String> {
    let doc = BinsDoc {
        format: BINS_FORMAT.into(),
        version: BINS_FORMAT_VERSION,
        seed: bins.seed,
        metric: BINS_METRIC.into(),
        inertia: bins.inertia,
        inertia_history: bins.inertia_history.clone(),
        representatives: bins.representatives.iter().map(|q| q.to_array()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::arg(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn parse_bins(bytes: &[u8]) -> Result<BinSet> {
    let value: Value = parse_json(bytes)?;
    check_header(&value, BINS_FORMAT, BINS_FORMAT_VERSION, "rotation-bins")?;
    let doc: BinsDoc = parse_json(bytes)?;
    if doc.metric != BINS_METRIC {
        return Err(FormatError::field("metric", format!("unsupported metric {:?}", doc.metric)).into());
    }
    if doc.representatives.is_empty() {
        return Err(FormatError::field("representatives", "empty").into());
    }
    let representatives = doc
        .representatives
        .iter()
        .enumerate()
        .map(|(i, [w, x, y, z])| {
            UnitQuaternion::new(*w, *x, *y, *z).map_err(|e| FormatError::field(format!("representatives[{i}]"), e).into())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinSet {
        representatives,
        seed: doc.seed,
        inertia: doc.inertia,
        inertia_history: doc.inertia_history,
    })
}

pub fn save_bins(path: &Path, bins: &BinSet) -> Result<()> {
    atomic_write(path, bins_to_json(bins)?.as_bytes())
}

pub fn load_bins(path: &Path) -> Result<BinSet> {
    parse_bins(&read_file(path)?)
}

/// An externally produced 2D region proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub box2d: Box2d,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

pub fn parse_proposals(bytes: &[u8]) -> Result<Vec<Proposal>> {
    let list: Vec<Proposal> = parse_json(bytes)?;
    for (i, p) in list.iter().enumerate() {
        if let Some(s) = p.score {
            if !s.is_finite() {
                return Err(FormatError::field(format!("[{i}].score"), "not finite").into());
            }
        }
    }
    Ok(list)
}

pub fn load_proposals(path: &Path) -> Result<Vec<Proposal>> {
    parse_proposals(&read_file(path)?)
}
