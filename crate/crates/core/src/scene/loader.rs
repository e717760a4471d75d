//! JSON scene files and Wavefront OBJ ingestion.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Camera, Material, Mesh, Object, Scene, SceneDesc};
use crate::error::{Error, Result};
use crate::math::{Affine, Vec3};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<CameraFile>,
    #[serde(default)]
    environment: [f32; 3],
    objects: Vec<ObjectFile>,
    instances: Vec<InstanceFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CameraFile {
    pos: [f32; 3],
    look_at: [f32; 3],
    up: [f32; 3],
    fov_y: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectFile {
    id: String,
    meshes: Vec<MeshRef>,
    material: Material,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum MeshRef {
    Obj(String),
    Inline(InlineMesh),
}

#[derive(Debug, Serialize, Deserialize)]
struct InlineMesh {
    vertices: Vec<[f32; 3]>,
    triangles: Vec<[u32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normals: Option<Vec<[f32; 3]>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    object: String,
    #[serde(default = "identity_rows")]
    transform: [f32; 12],
}

fn identity_rows() -> [f32; 12] {
    Affine::IDENTITY.m
}

/// Loads a JSON scene; OBJ references resolve relative to the scene file's directory.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scene(&text, path, |name| {
        let p = base.join(name);
        if !p.is_file() {
            return Err(Error::MissingObj(p));
        }
        let src = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        parse_obj(&src, &p)
    })
}

/// Parses a scene from JSON text. OBJ references are not allowed.
pub fn scene_from_json_str(text: &str) -> Result<Scene> {
    parse_scene(text, Path::new("<memory>"), |name| Err(Error::MissingObj(PathBuf::from(name))))
}

type ObjMesh = (Vec<Vec3>, Vec<[u32; 3]>);

fn parse_scene(text: &str, path: &Path, mut load_obj: impl FnMut(&str) -> Result<ObjMesh>) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::SceneParse {
        path: path.to_path_buf(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let ctx = |field: String, message: String| Error::SceneParse { path: path.to_path_buf(), message: format!("{field}: {message}") };

    let mut desc = SceneDesc {
        environment: Vec3::from_array(file.environment),
        camera: file.camera.map(|c| Camera {
            pos: Vec3::from_array(c.pos),
            look_at: Vec3::from_array(c.look_at),
            up: Vec3::from_array(c.up),
            fov_y: c.fov_y,
        }),
        ..SceneDesc::default()
    };
    let mut object_index = HashMap::new();
    for (oi, obj) in file.objects.into_iter().enumerate() {
        if object_index.insert(obj.id.clone(), oi).is_some() {
            return Err(ctx(format!("objects[{oi}].id"), format!("duplicate object id {:?}", obj.id)));
        }
        // identical materials share one slot, in order of first use
        let material = match desc.materials.iter().position(|m| *m == obj.material) {
            Some(i) => i,
            None => {
                desc.materials.push(obj.material);
                desc.materials.len() - 1
            }
        };
        let mut mesh_ids = Vec::with_capacity(obj.meshes.len());
        for (mi, mref) in obj.meshes.into_iter().enumerate() {
            let field = format!("objects[{oi}].meshes[{mi}]");
            let mesh = match mref {
                MeshRef::Obj(name) => {
                    let (v, t) = load_obj(&name)?;
                    Mesh::new(v, t, material)
                }
                MeshRef::Inline(m) => {
                    let mut mesh = Mesh::new(m.vertices.into_iter().map(Vec3::from_array).collect(), m.triangles, material);
                    mesh.normals = m.normals.map(|n| n.into_iter().map(Vec3::from_array).collect());
                    mesh
                }
            };
            if mesh.triangles.is_empty() {
                return Err(ctx(field, "mesh with zero triangles".into()));
            }
            mesh.validate().map_err(|e| ctx(field, e))?;
            mesh_ids.push(desc.meshes.len());
            desc.meshes.push(mesh);
        }
        desc.objects.push(Object { id: obj.id, meshes: mesh_ids });
    }
    for (ii, inst) in file.instances.into_iter().enumerate() {
        let &o = object_index
            .get(&inst.object)
            .ok_or_else(|| ctx(format!("instances[{ii}].object"), format!("unknown object {:?}", inst.object)))?;
        desc.instances.push((o, Affine::from_rows(inst.transform)));
    }
    Scene::new(desc)
}

/// Parses OBJ text keeping only `v` and `f` records; polygons are fan-triangulated.
pub fn parse_obj(src: &str, path: &Path) -> Result<(Vec<Vec3>, Vec<[u32; 3]>)> {
    let err = |line: usize, message: String| Error::ObjParse { path: path.to_path_buf(), line, message };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (ln, line) in src.lines().enumerate() {
        let ln = ln + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0f32; 3];
                for slot in &mut c {
                    let tok = it.next().ok_or_else(|| err(ln, "vertex needs 3 coordinates".into()))?;
                    *slot = tok.parse().map_err(|_| err(ln, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Vec3::from_array(c));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first.parse().map_err(|_| err(ln, format!("bad face index {tok:?}")))?;
                    let resolved = if i > 0 { i - 1 } else { vertices.len() as i64 + i };
                    if i == 0 || resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(ln, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(err(ln, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

/// Renders a mesh as OBJ text (`v` and `f` records only).
pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Serializes a scene to the JSON scene format. Meshes listed in `obj_files` are
/// referenced by file name instead of being inlined.
pub fn scene_to_json(scene: &Scene, obj_files: &HashMap<usize, String>) -> String {
    let file = SceneFile {
        camera: Some(CameraFile {
            pos: scene.camera.pos.to_array(),
            look_at: scene.camera.look_at.to_array(),
            up: scene.camera.up.to_array(),
            fov_y: scene.camera.fov_y,
        }),
        environment: scene.environment.to_array(),
        objects: scene
            .objects
            .iter()
            .map(|o| ObjectFile {
                id: o.id.clone(),
                meshes: o
                    .meshes
                    .iter()
                    .map(|&m| match obj_files.get(&m) {
                        Some(name) => MeshRef::Obj(name.clone()),
                        None => {
                            let mesh = &scene.meshes[m];
                            MeshRef::Inline(InlineMesh {
                                vertices: mesh.vertices.iter().map(|v| v.to_array()).collect(),
                                triangles: mesh.triangles.clone(),
                                normals: mesh.normals.as_ref().map(|n| n.iter().map(|v| v.to_array()).collect()),
                            })
                        }
                    })
                    .collect(),
                material: *scene.material_of_mesh(o.meshes[0]),
            })
            .collect(),
        instances: scene
            .instances
            .iter()
            .map(|i| InstanceFile { object: scene.objects[i.object].id.clone(), transform: i.transform.m })
            .collect(),
    };
    serde_json::to_string(&file).expect("scene serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Aabb;

    const ONE_TRI: &str = r#"{
        "environment": [0.2, 0.2, 0.2],
        "objects": [{"id": "tri", "material": {"kind": "diffuse", "albedo": [0.5, 0.5, 0.5]},
                     "meshes": [{"inline": {"vertices": [[0,0,0],[1,0,0],[0,1,2]], "triangles": [[0,1,2]]}}]}],
        "instances": [{"object": "tri", "transform": [1,0,0,0, 0,1,0,0, 0,0,1,0]}]
    }"#;

    #[test]
    fn inline_triangle_identity_bounds() {
        let s = scene_from_json_str(ONE_TRI).unwrap();
        assert_eq!(s.bounds, Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 2.0)));
        assert_eq!(s.instances.len(), 1);
    }

    #[test]
    fn missing_obj_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"environment":[1,1,1],"objects":[{"id":"a","material":{"kind":"diffuse","albedo":[0.5,0.5,0.5]},
               "meshes":[{"obj":"nowhere.obj"}]}],"instances":[{"object":"a"}]}"#,
        )
        .unwrap();
        let e = load_scene(&p).unwrap_err();
        assert!(matches!(&e, Error::MissingObj(m) if m.ends_with("nowhere.obj")), "{e}");
    }

    #[test]
    fn parse_error_carries_line() {
        let e = scene_from_json_str("{\n\"objects\": [,]\n}").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn zero_triangle_mesh_is_rejected_with_field() {
        let text = ONE_TRI.replace("[[0,1,2]]", "[]");
        let e = scene_from_json_str(&text).unwrap_err().to_string();
        assert!(e.contains("objects[0].meshes[0]") && e.contains("zero triangles"), "{e}");
    }

    #[test]
    fn unknown_instance_object() {
        let text = ONE_TRI.replace("\"object\": \"tri\"", "\"object\": \"nope\"");
        let e = scene_from_json_str(&text).unwrap_err().to_string();
        assert!(e.contains("instances[0].object"), "{e}");
    }

    #[test]
    fn obj_fans_polygons_and_ignores_other_records() {
        let src = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/2/1 3/3/1 4/4/1\ng whatever\nf -4 -3 -2\n";
        let (v, t) = parse_obj(src, Path::new("q.obj")).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(t, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn obj_bad_index_reports_line() {
        let e = parse_obj("v 0 0 0\nf 1 2 3\n", Path::new("x.obj")).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn json_roundtrip_preserves_scene() {
        let s = scene_from_json_str(ONE_TRI).unwrap();
        let again = scene_from_json_str(&scene_to_json(&s, &HashMap::new())).unwrap();
        assert_eq!(s.digest(), again.digest());
    }
}
