//! On-disk dataset layout:
//!
//! ```text
//! <root>/dataset.json            DatasetManifest
//! <root>/<split>/<index>.vid     raw 8-bit frames (see write_video)
//! <root>/<split>/<index>.json    VideoSidecar
//! ```
//!
//! `<split>` is `train`, `val` or `test`; `<index>` is the zero-padded global
//! video index.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess, RawVideo};
use super::split::{split_synthetic, DatasetKind, Splits};
use super::synthetic::{synthesize_dataset, SYNTHETIC_SIZE};
use super::{Dataset, Split, Video};
use crate::error::{Error, Result};

pub const VIDEO_MAGIC: &[u8; 8] = b"IBVID\0\0\x01";
const MANIFEST_FILE: &str = "dataset.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub kind: DatasetKind,
    /// Channels after preprocessing.
    pub channels: usize,
    /// Square frame side after preprocessing.
    pub frame_size: usize,
    pub count: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VideoSidecar {
    pub source_id: String,
    pub fps: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person: Option<u32>,
}

/// `magic (8) | frames u32 | height u32 | width u32 | channels u32 | bytes`,
/// little-endian, bytes in `(T, H, W, c)` order.
pub fn write_video(path: &Path, raw: &RawVideo) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + raw.data.len());
    buf.extend_from_slice(VIDEO_MAGIC);
    for v in [raw.frames, raw.height, raw.width, raw.channels] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.extend_from_slice(&raw.data);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_video(path: &Path) -> Result<RawVideo> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 24];
    f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    if &head[..8] != VIDEO_MAGIC {
        return Err(Error::Dataset(format!("{} is not a video file", path.display())));
    }
    let dim = |i: usize| u32::from_le_bytes(head[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (t, h, w, c) = (dim(0), dim(1), dim(2), dim(3));
    let mut data = Vec::with_capacity(t * h * w * c);
    f.read_to_end(&mut data).map_err(|e| Error::io(path, e))?;
    RawVideo::new(t, h, w, c, data)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn video_path(root: &Path, split: Split, index: usize, ext: &str) -> PathBuf {
    root.join(split.dir_name()).join(format!("{index:05}.{ext}"))
}

pub fn save_dataset(root: &Path, manifest: &DatasetManifest, videos: &[(RawVideo, VideoSidecar)], splits: &Splits) -> Result<()> {
    if videos.len() != manifest.count || !splits.is_partition_of(videos.len()) {
        return Err(Error::Dataset("splits must partition all videos".into()));
    }
    for split in [Split::Train, Split::Val, Split::Test] {
        let dir = root.join(split.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    write_json(&root.join(MANIFEST_FILE), manifest)?;
    for (split, idx) in [
        (Split::Train, &splits.train),
        (Split::Val, &splits.val),
        (Split::Test, &splits.test),
    ] {
        for &i in idx {
            let (raw, side) = &videos[i];
            write_video(&video_path(root, split, i, "vid"), raw)?;
            write_json(&video_path(root, split, i, "json"), side)?;
        }
    }
    Ok(())
}

/// Writes the procedural dataset: `count` clips of `length` RGB frames at
/// 64x64 under `seed`, split by index.
pub fn save_synthetic_dataset(root: &Path, seed: u64, count: usize, length: usize) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(Error::Dataset("synthetic dataset needs at least one video".into()));
    }
    let videos: Vec<(RawVideo, VideoSidecar)> = synthesize_dataset(seed, count, length)
        .into_iter()
        .enumerate()
        .map(|(i, clip)| {
            let side = VideoSidecar {
                source_id: format!("synthetic-{seed}-{i:05}"),
                fps: 0.0,
                frames: clip.raw.frames,
                height: clip.raw.height,
                width: clip.raw.width,
                channels: clip.raw.channels,
                person: None,
            };
            (clip.raw, side)
        })
        .collect();
    let manifest = DatasetManifest {
        format_version: 1,
        name: format!("synthetic-{seed}"),
        kind: DatasetKind::Synthetic,
        channels: 3,
        frame_size: SYNTHETIC_SIZE,
        count,
        seed: Some(seed),
    };
    save_dataset(root, &manifest, &videos, &split_synthetic(count))?;
    Ok(manifest)
}

/// Loads and preprocesses every video. Split membership comes from the
/// directory each file sits in.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest_path = root.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(Error::Dataset(format!("no {MANIFEST_FILE} under {}", root.display())));
    }
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let mut slots: Vec<Option<Video>> = vec![None; manifest.count];
    let mut splits = Splits::default();
    for split in [Split::Train, Split::Val, Split::Test] {
        let dir = root.join(split.dir_name());
        if !dir.exists() {
            continue;
        }
        let mut names: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "vid"))
            .collect();
        names.sort();
        for path in names {
            let index: usize = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Dataset(format!("bad video file name {}", path.display())))?;
            if index >= manifest.count || slots[index].is_some() {
                return Err(Error::Dataset(format!("video index {index} out of range or duplicated")));
            }
            let raw = read_video(&path)?;
            let sidecar: VideoSidecar = read_json(&path.with_extension("json"))?;
            let frames = preprocess(&raw, manifest.frame_size, manifest.channels)?;
            slots[index] = Some(Video { frames, sidecar });
            match split {
                Split::Train => splits.train.push(index),
                Split::Val => splits.val.push(index),
                Split::Test => splits.test.push(index),
            }
        }
    }
    let videos = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Dataset(format!("video {i} missing from {}", root.display()))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest,
        videos,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_synthetic, synthesize_dataset};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clips = synthesize_dataset(1, 9, 18);
        let videos: Vec<(RawVideo, VideoSidecar)> = clips
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let side = VideoSidecar {
                    source_id: format!("synthetic-{i}"),
                    fps: 10.0,
                    frames: c.raw.frames,
                    height: c.raw.height,
                    width: c.raw.width,
                    channels: c.raw.channels,
                    person: None,
                };
                (c.raw, side)
            })
            .collect();
        let manifest = DatasetManifest {
            format_version: 1,
            name: "synthetic".into(),
            kind: DatasetKind::Synthetic,
            channels: 3,
            frame_size: 64,
            count: 9,
            seed: Some(1),
        };
        let splits = split_synthetic(9);
        save_dataset(dir.path(), &manifest, &videos, &splits).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.manifest, manifest);
        assert_eq!(ds.splits, splits);
        assert_eq!(ds.videos[4].frames.shape(), &[3, 18, 64, 64]);
        assert_eq!(read_video(&dir.path().join("val/00006.vid")).unwrap(), videos[6].0);
    }

    #[test]
    fn missing_manifest_is_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Dataset(_))));
    }
}
