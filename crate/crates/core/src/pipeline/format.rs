//! Line-oriented pose/track interchange format.
//!
//! ```text
//! SKYLOOP-BATCH 1
//! BATCH <id> <segment_end 0|1>
//! VIEW id cx cy cz r00 r01 r02 r10 r11 r12 r20 r21 r22 f px py w h
//! TRACK id x y z [view_id u v]...
//! ```
//!
//! `r` is the world-to-camera rotation, row-major. Numbers are written in
//! shortest round-trip form, so a write/read cycle is bit-exact.

use std::io::{BufRead, Write};

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Point3, ViewPose};
use crate::simulator::{ObservationBatch, SparseTrack};

pub const BATCH_HEADER: &str = "SKYLOOP-BATCH 1";

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_batch<W: Write>(batch: &ObservationBatch, mut w: W) -> Result<()> {
    writeln!(w, "{BATCH_HEADER}")?;
    writeln!(w, "BATCH {} {}", batch.id, u8::from(batch.segment_end))?;
    for v in &batch.views {
        let r = &v.rotation;
        let k = &v.intrinsics;
        let mut f: Vec<String> = vec![
            v.view_id.to_string(),
            num(v.center.x),
            num(v.center.y),
            num(v.center.z),
        ];
        for i in 0..3 {
            for j in 0..3 {
                f.push(num(r[(i, j)]));
            }
        }
        f.extend([
            num(k.focal),
            num(k.cx),
            num(k.cy),
            k.width.to_string(),
            k.height.to_string(),
        ]);
        writeln!(w, "VIEW {}", f.join(" "))?;
    }
    for t in &batch.tracks {
        write!(
            w,
            "TRACK {} {} {} {}",
            t.id,
            num(t.point.x),
            num(t.point.y),
            num(t.point.z)
        )?;
        for &(view, u, v) in &t.observations {
            write!(w, " {view} {} {}", num(u), num(v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn ingest(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Ingestion(format!("line {line}: {msg}"))
}

fn field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| ingest(line, format!("'{s}': {e}")))
}

fn finite(line: usize, s: &str) -> Result<f64> {
    let v: f64 = field(line, s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ingest(line, format!("non-finite number '{s}'")))
    }
}

pub fn read_batch<R: BufRead>(r: R) -> Result<ObservationBatch> {
    let mut lines = r.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == BATCH_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(ingest(
                1,
                format!("expected header '{BATCH_HEADER}', found '{h}'"),
            ))
        }
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(Error::Ingestion("empty batch file".into())),
    }
    let mut batch = ObservationBatch {
        id: 0,
        views: Vec::new(),
        tracks: Vec::new(),
        segment_end: true,
    };
    let mut have_batch = false;
    for (i, l) in lines {
        let n = i + 1;
        let l = l?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let Some((&kind, rest)) = parts.split_first() else {
            continue;
        };
        match kind {
            "BATCH" => {
                if rest.len() != 2 {
                    return Err(ingest(n, "BATCH expects id and segment flag"));
                }
                batch.id = field(n, rest[0])?;
                batch.segment_end = match rest[1] {
                    "0" => false,
                    "1" => true,
                    s => return Err(ingest(n, format!("segment flag must be 0 or 1, got '{s}'"))),
                };
                have_batch = true;
            }
            "VIEW" => {
                if rest.len() != 18 {
                    return Err(ingest(
                        n,
                        format!("VIEW expects 18 fields, found {}", rest.len()),
                    ));
                }
                let id: u32 = field(n, rest[0])?;
                let c = Point3::new(
                    finite(n, rest[1])?,
                    finite(n, rest[2])?,
                    finite(n, rest[3])?,
                );
                let mut r = Matrix3::zeros();
                for k in 0..9 {
                    r[(k / 3, k % 3)] = finite(n, rest[4 + k])?;
                }
                let k = Intrinsics {
                    focal: finite(n, rest[13])?,
                    cx: finite(n, rest[14])?,
                    cy: finite(n, rest[15])?,
                    width: field(n, rest[16])?,
                    height: field(n, rest[17])?,
                };
                let view = ViewPose::new(id, c, r, k).map_err(|e| ingest(n, e))?;
                batch.views.push(view);
            }
            "TRACK" => {
                if rest.len() < 4 || (rest.len() - 4) % 3 != 0 {
                    return Err(ingest(
                        n,
                        "TRACK expects id x y z followed by view_id u v triples",
                    ));
                }
                let id: u32 = field(n, rest[0])?;
                let point = Point3::new(
                    finite(n, rest[1])?,
                    finite(n, rest[2])?,
                    finite(n, rest[3])?,
                );
                let mut observations = Vec::with_capacity((rest.len() - 4) / 3);
                for o in rest[4..].chunks(3) {
                    observations.push((field(n, o[0])?, finite(n, o[1])?, finite(n, o[2])?));
                }
                batch.tracks.push(SparseTrack {
                    id,
                    point,
                    observations,
                });
            }
            _ => return Err(ingest(n, format!("unknown record '{kind}'"))),
        }
    }
    if !have_batch {
        return Err(Error::Ingestion("missing BATCH record".into()));
    }
    Ok(batch)
}
