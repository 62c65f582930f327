//! JSON helpers: reals are written with 17 significant digits so that output
//! files diff byte-for-byte between runs.

use std::path::Path;

use cloudreg::keyframe::fmt_real;
use cloudreg::RigidTransform;
use serde::Deserialize;
use serde_json::{json, Map, Number, Value};

use crate::Failure;

/// A finite real as a JSON number; NaN and infinities become `null`.
pub fn real(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    fmt_real(x).parse::<Number>().map(Value::Number).unwrap_or(Value::Null)
}

pub fn reals(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| real(x)).collect())
}

pub fn transform(t: &RigidTransform) -> Value {
    let tr = t.translation();
    json!({
        "rotation": reals(&t.rotation_row_major()),
        "translation": reals(&[tr.x, tr.y, tr.z]),
    })
}

pub fn object(entries: impl IntoIterator<Item = (&'static str, Value)>) -> Value {
    Value::Object(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

pub fn to_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

#[derive(Deserialize)]
struct TransformFile {
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Deserialize)]
struct TransformList {
    transforms: Vec<TransformFile>,
}

fn build(t: TransformFile) -> Result<RigidTransform, String> {
    RigidTransform::from_row_major(&t.rotation, &t.translation).map_err(|e| e.to_string())
}

/// Reads `{"rotation": [9 reals, row-major], "translation": [3 reals]}`;
/// other keys are ignored.
pub fn read_transform(path: &Path) -> Result<RigidTransform, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str::<TransformFile>(&text)
        .map_err(|e| e.to_string())
        .and_then(build)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Reads `{"transforms": [{"rotation": .., "translation": ..}, ..]}`.
pub fn read_transforms(path: &Path) -> Result<Vec<RigidTransform>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str::<TransformList>(&text)
        .map_err(|e| e.to_string())
        .and_then(|l| l.transforms.into_iter().map(build).collect())
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_keep_seventeen_digits() {
        assert_eq!(real(0.1).to_string(), "1.0000000000000001e-01");
        assert_eq!(real(-2.5).to_string(), "-2.5000000000000000e+00");
        assert_eq!(real(f64::NAN), Value::Null);
        let back: f64 = serde_json::from_str(&real(1.0 / 3.0).to_string()).unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    #[test]
    fn transform_round_trips_through_text() {
        let (s, c) = 0.3f64.sin_cos();
        let t = RigidTransform::from_row_major(&[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0], &[1.0, -2.0, 0.5]).unwrap();
        let dir = std::env::temp_dir().join(format!("cloudreg-json-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.json");
        std::fs::write(&path, to_text(&transform(&t))).unwrap();
        assert_eq!(read_transform(&path).unwrap(), t);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
