//! Binary session container.
//!
//! Layout (all scalars little-endian):
//!
//! ```text
//! header   magic "DASN" | version u32 | fps f64 | mode u8
//!          | map h u32 | map w u32 | frame h u32 | frame w u32
//!          | frame_count u64 | has_positions u8 | id_len u32 | id bytes
//! frames   frame_count x (record_len u64 | record)
//! record   timestamp f64 | dist f64 | state_len u8 | state label
//!          | gt map h*w f64 | has_webcam u8 | [webcam h*w f64]
//!          | [position 2 x f64] | scene h*w*3 u8
//! ```
//!
//! Maps are stored as `f64`, so a round trip is exact.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use drivattn_core::{AttentionMap, DriverState, DrivingMode, FrameSample, SceneTensor, SessionRecord};

use crate::error::{io_error, HarnessError, Result};

pub const SESSION_MAGIC: &[u8; 4] = b"DASN";
pub const SESSION_FORMAT_VERSION: u32 = 1;
pub const SESSION_EXTENSION: &str = "dasn";

fn mode_code(mode: DrivingMode) -> u8 {
    match mode {
        DrivingMode::Autopilot => 0,
        DrivingMode::Manual => 1,
    }
}

fn mode_from_code(code: u8) -> Result<DrivingMode> {
    match code {
        0 => Ok(DrivingMode::Autopilot),
        1 => Ok(DrivingMode::Manual),
        other => Err(HarnessError::Corrupt(format!("unknown driving mode code {other}"))),
    }
}

/// Serializes `session` into `w`. The session is validated first.
pub fn write_session<W: Write>(session: &SessionRecord, mut w: W) -> Result<()> {
    session.validate()?;
    let (mh, mw) = session.map_shape().unwrap_or((0, 0));
    let (fh, fw) = session
        .frames
        .first()
        .map(|f| (f.frame.height(), f.frame.width()))
        .unwrap_or((0, 0));
    let io = |e: io::Error| HarnessError::Io {
        path: "<stream>".into(),
        source: e,
    };
    w.write_all(SESSION_MAGIC).map_err(io)?;
    w.write_u32::<LE>(SESSION_FORMAT_VERSION).map_err(io)?;
    w.write_f64::<LE>(session.fps).map_err(io)?;
    w.write_u8(mode_code(session.mode)).map_err(io)?;
    for d in [mh, mw, fh, fw] {
        w.write_u32::<LE>(d as u32).map_err(io)?;
    }
    w.write_u64::<LE>(session.frames.len() as u64).map_err(io)?;
    w.write_u8(session.ego_positions.is_some() as u8).map_err(io)?;
    w.write_u32::<LE>(session.session_id.len() as u32).map_err(io)?;
    w.write_all(session.session_id.as_bytes()).map_err(io)?;

    let mut record = Vec::new();
    for (i, f) in session.frames.iter().enumerate() {
        if f.frame.height() != fh || f.frame.width() != fw {
            return Err(HarnessError::Corrupt(format!("frame {i} has a different scene size")));
        }
        record.clear();
        encode_frame(f, session.ego_positions.as_ref().map(|p| p[i]), &mut record);
        w.write_u64::<LE>(record.len() as u64).map_err(io)?;
        w.write_all(&record).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn encode_frame(f: &FrameSample, position: Option<[f64; 2]>, out: &mut Vec<u8>) {
    // Writes into a Vec cannot fail.
    out.write_f64::<LE>(f.timestamp).unwrap();
    out.write_f64::<LE>(f.dist_to_intersection).unwrap();
    let label = f.state.label();
    out.write_u8(label.len() as u8).unwrap();
    out.extend_from_slice(label.as_bytes());
    for v in f.gt_map.values() {
        out.write_f64::<LE>(*v).unwrap();
    }
    match &f.webcam_map {
        Some(m) => {
            out.push(1);
            for v in m.values() {
                out.write_f64::<LE>(*v).unwrap();
            }
        }
        None => out.push(0),
    }
    if let Some([x, y]) = position {
        out.write_f64::<LE>(x).unwrap();
        out.write_f64::<LE>(y).unwrap();
    }
    out.extend_from_slice(f.frame.bytes());
}

struct Header {
    fps: f64,
    mode: DrivingMode,
    map: (usize, usize),
    scene: (usize, usize),
    frame_count: u64,
    has_positions: bool,
    session_id: String,
}

fn truncated(what: &str) -> impl Fn(io::Error) -> HarnessError + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            HarnessError::Truncated(format!("ends inside {what}"))
        } else {
            HarnessError::Io {
                path: "<stream>".into(),
                source: e,
            }
        }
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated("the header"))?;
    if &magic != SESSION_MAGIC {
        return Err(HarnessError::BadMagic);
    }
    let t = truncated("the header");
    let version = r.read_u32::<LE>().map_err(&t)?;
    if version != SESSION_FORMAT_VERSION {
        return Err(HarnessError::UnsupportedVersion {
            found: version,
            supported: SESSION_FORMAT_VERSION,
        });
    }
    let fps = r.read_f64::<LE>().map_err(&t)?;
    let mode = mode_from_code(r.read_u8().map_err(&t)?)?;
    let mut dims = [0usize; 4];
    for d in &mut dims {
        *d = r.read_u32::<LE>().map_err(&t)? as usize;
    }
    let frame_count = r.read_u64::<LE>().map_err(&t)?;
    let has_positions = r.read_u8().map_err(&t)? != 0;
    let id_len = r.read_u32::<LE>().map_err(&t)? as usize;
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(&t)?;
    let session_id = String::from_utf8(id)
        .map_err(|_| HarnessError::Corrupt("session id is not UTF-8".into()))?;
    Ok(Header {
        fps,
        mode,
        map: (dims[0], dims[1]),
        scene: (dims[2], dims[3]),
        frame_count,
        has_positions,
        session_id,
    })
}

fn read_map(r: &mut Cursor<&[u8]>, (h, w): (usize, usize)) -> Result<AttentionMap> {
    let mut values = vec![0.0; h * w];
    r.read_f64_into::<LE>(&mut values)
        .map_err(|_| HarnessError::Corrupt("frame record shorter than its maps".into()))?;
    Ok(AttentionMap::from_values(h, w, values)?)
}

fn decode_frame(
    record: &[u8],
    header: &Header,
) -> Result<(FrameSample, Option<[f64; 2]>)> {
    let short = |_| HarnessError::Corrupt("frame record shorter than declared fields".into());
    let mut r = Cursor::new(record);
    let timestamp = r.read_f64::<LE>().map_err(short)?;
    let dist = r.read_f64::<LE>().map_err(short)?;
    let label_len = r.read_u8().map_err(short)? as usize;
    let mut label = vec![0u8; label_len];
    r.read_exact(&mut label).map_err(short)?;
    let label = String::from_utf8(label)
        .map_err(|_| HarnessError::Corrupt("state label is not UTF-8".into()))?;
    let state = DriverState::from_label(&label)?;
    let gt_map = read_map(&mut r, header.map)?;
    let webcam_map = match r.read_u8().map_err(short)? {
        0 => None,
        _ => Some(read_map(&mut r, header.map)?),
    };
    let position = if header.has_positions {
        Some([r.read_f64::<LE>().map_err(short)?, r.read_f64::<LE>().map_err(short)?])
    } else {
        None
    };
    let (fh, fw) = header.scene;
    let start = r.position() as usize;
    let bytes = &record[start..];
    if bytes.len() != fh * fw * 3 {
        return Err(HarnessError::Corrupt(format!(
            "scene holds {} bytes, header declares {fh}x{fw}x3",
            bytes.len()
        )));
    }
    let frame = SceneTensor::new(fh, fw, bytes.to_vec())?;
    Ok((
        FrameSample {
            frame,
            timestamp,
            state,
            gt_map,
            webcam_map,
            dist_to_intersection: dist,
            mode: header.mode,
        },
        position,
    ))
}

fn max_record_len(h: &Header) -> u64 {
    let map = 8 * h.map.0 as u64 * h.map.1 as u64;
    8 + 8 + 1 + 255 + 2 * map + 1 + 16 + 3 * h.scene.0 as u64 * h.scene.1 as u64
}

/// Reads one session from `r`, rejecting truncated or inconsistent data.
pub fn read_session<R: Read>(mut r: R) -> Result<SessionRecord> {
    let header = read_header(&mut r)?;
    let mut frames = Vec::new();
    let mut positions = header.has_positions.then(Vec::new);
    let mut record = Vec::new();
    for i in 0..header.frame_count {
        let len = r
            .read_u64::<LE>()
            .map_err(|_| HarnessError::Truncated(format!("{i} of {} frames present", header.frame_count)))?;
        if len > max_record_len(&header) {
            return Err(HarnessError::Corrupt(format!("frame {i} declares an oversized record")));
        }
        record.resize(len as usize, 0);
        r.read_exact(&mut record)
            .map_err(|_| HarnessError::Truncated(format!("frame {i} record is incomplete")))?;
        let (frame, pos) = decode_frame(&record, &header)?;
        frames.push(frame);
        if let (Some(p), Some(v)) = (pos, positions.as_mut()) {
            v.push(p);
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(truncated("trailing data"))? != 0 {
        return Err(HarnessError::Corrupt("unexpected bytes after the last frame".into()));
    }
    let session = SessionRecord {
        session_id: header.session_id,
        fps: header.fps,
        mode: header.mode,
        frames,
        ego_positions: positions,
    };
    session.validate()?;
    Ok(session)
}

pub fn save_session(session: &SessionRecord, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    write_session(session, BufWriter::new(file)).map_err(|e| with_path(e, path))
}

pub fn load_session(path: &Path) -> Result<SessionRecord> {
    let file = File::open(path).map_err(io_error(path))?;
    read_session(BufReader::new(file)).map_err(|e| with_path(e, path))
}

fn with_path(e: HarnessError, path: &Path) -> HarnessError {
    match e {
        HarnessError::Io { source, .. } => HarnessError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

/// Loads every session file in `dir`, sorted by file name.
pub fn load_session_dir(dir: &Path) -> Result<Vec<SessionRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == SESSION_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::Config(format!("no .{SESSION_EXTENSION} files in {}", dir.display())));
    }
    paths.iter().map(|p| load_session(p)).collect()
}
