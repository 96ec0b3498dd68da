//! Correspondence and intrinsics files.
//!
//! Correspondences are CSV (`u,v,X,Y,Z` or `pX,pY,pZ,qX,qY,qZ`, header
//! optional) or JSON lists of `{pixel, point}` / `{p, q}` objects.

use serde::Deserialize;

use super::{CameraIntrinsics, Correspondence2D3D, Correspondence3D3D, LocError, Vec2};
use crate::geometry::Vec3;

fn csv_rows(text: &str, width: usize) -> Result<Vec<Vec<f64>>, LocError> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == width => {
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(LocError::Format(format!("line {}: non-finite value", lineno + 1)));
                }
                rows.push(v);
            }
            Ok(v) => {
                return Err(LocError::Format(format!("line {}: expected {width} fields, got {}", lineno + 1, v.len())));
            }
            // a header line is only allowed first
            Err(_) if rows.is_empty() && lineno == 0 => continue,
            Err(e) => return Err(LocError::Format(format!("line {}: {e}", lineno + 1))),
        }
    }
    Ok(rows)
}

fn looks_like_json(text: &str) -> bool {
    text.trim_start().starts_with('[') || text.trim_start().starts_with('{')
}

pub fn parse_correspondences_2d3d(text: &str) -> Result<Vec<Correspondence2D3D>, LocError> {
    if looks_like_json(text) {
        #[derive(Deserialize)]
        struct Row {
            pixel: [f64; 2],
            point: [f64; 3],
        }
        let rows: Vec<Row> = serde_json::from_str(text).map_err(|e| LocError::Format(e.to_string()))?;
        return Ok(rows
            .into_iter()
            .map(|r| Correspondence2D3D {
                pixel: Vec2::new(r.pixel[0], r.pixel[1]),
                point: Vec3::from(r.point),
            })
            .collect());
    }
    Ok(csv_rows(text, 5)?
        .into_iter()
        .map(|v| Correspondence2D3D {
            pixel: Vec2::new(v[0], v[1]),
            point: Vec3::new(v[2], v[3], v[4]),
        })
        .collect())
}

pub fn parse_correspondences_3d3d(text: &str) -> Result<Vec<Correspondence3D3D>, LocError> {
    if looks_like_json(text) {
        #[derive(Deserialize)]
        struct Row {
            p: [f64; 3],
            q: [f64; 3],
        }
        let rows: Vec<Row> = serde_json::from_str(text).map_err(|e| LocError::Format(e.to_string()))?;
        return Ok(rows
            .into_iter()
            .map(|r| Correspondence3D3D {
                p: Vec3::from(r.p),
                q: Vec3::from(r.q),
            })
            .collect());
    }
    Ok(csv_rows(text, 6)?
        .into_iter()
        .map(|v| Correspondence3D3D {
            p: Vec3::new(v[0], v[1], v[2]),
            q: Vec3::new(v[3], v[4], v[5]),
        })
        .collect())
}

pub fn parse_intrinsics(text: &str) -> Result<CameraIntrinsics, LocError> {
    let k: CameraIntrinsics = serde_json::from_str(text).map_err(|e| LocError::Format(e.to_string()))?;
    k.validate()?;
    Ok(k)
}

pub fn write_correspondences_2d3d(corrs: &[Correspondence2D3D]) -> String {
    let mut out = String::from("u,v,X,Y,Z\n");
    for c in corrs {
        out.push_str(&format!("{},{},{},{},{}\n", c.pixel.x, c.pixel.y, c.point.x, c.point.y, c.point.z));
    }
    out
}

pub fn write_correspondences_3d3d(corrs: &[Correspondence3D3D]) -> String {
    let mut out = String::from("pX,pY,pZ,qX,qY,qZ\n");
    for c in corrs {
        out.push_str(&format!("{},{},{},{},{},{}\n", c.p.x, c.p.y, c.p.z, c.q.x, c.q.y, c.q.z));
    }
    out
}
