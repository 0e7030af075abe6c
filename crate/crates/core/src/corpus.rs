//! Data model, manifest ingestion, frame sampling and caption handling.
//!
//! Videos are ordered sequences of precomputed frame-feature vectors; captions are
//! lowercase alphanumeric token sequences. On disk a split is a newline-delimited
//! JSON manifest whose records point at little-endian `VTRF` frame files.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FRAMES_MAGIC: &[u8; 4] = b"VTRF";
pub const FRAMES_VERSION: u32 = 1;

/// An ordered sequence of frame-feature vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    dim: usize,
    data: Vec<f32>,
}

impl Video {
    pub fn new(id: impl Into<String>, frames: Vec<Vec<f32>>) -> Result<Self> {
        let id = id.into();
        let dim = frames
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid(format!("video {id:?} has no frames")))?;
        let mut data = Vec::with_capacity(dim * frames.len());
        for (i, f) in frames.iter().enumerate() {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: f.len(),
                    context: format!("video {id:?} frame {i}"),
                });
            }
            data.extend_from_slice(f);
        }
        Self::from_flat(id, dim, data)
    }

    /// Builds a video from row-major frame data.
    pub fn from_flat(id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "video {id:?}: {} values do not form frames of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("frame data of video {id:?}")));
        }
        Ok(Self { id, dim, data })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// New video made of the frames at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Result<Video> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n_frames() {
                return Err(Error::invalid(format!(
                    "frame index {i} out of range for {} frames",
                    self.n_frames()
                )));
            }
            data.extend_from_slice(self.frame(i));
        }
        Video::from_flat(self.id.clone(), self.dim, data)
    }

    /// Mean of all frames, in f64.
    pub fn mean_frame(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.dim];
        for f in self.frames() {
            for (a, &x) in acc.iter_mut().zip(f) {
                *a += f64::from(x);
            }
        }
        let n = self.n_frames() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// A tokenized caption together with the string it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Text {
    source: String,
    tokens: Vec<String>,
}

impl Text {
    /// Builds a text from already-normalized tokens; the source is the space-joined tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("text has no tokens"));
        }
        for t in &tokens {
            if t.is_empty() || t.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
                return Err(Error::invalid(format!("token {t:?} is not normalized")));
            }
        }
        Ok(Self {
            source: tokens.join(" "),
            tokens,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(source: &str) -> Result<Text> {
    let tokens: Vec<String> = source
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    if tokens.is_empty() {
        return Err(Error::invalid(format!(
            "caption {source:?} contains no alphanumeric characters"
        )));
    }
    Ok(Text {
        source: source.to_string(),
        tokens,
    })
}

/// Joins several captions into one paragraph, tokenizing each part.
pub fn concat_captions<S: AsRef<str>>(captions: &[S]) -> Result<Text> {
    if captions.is_empty() {
        return Err(Error::invalid("no captions to concatenate"));
    }
    let mut tokens = Vec::new();
    let mut sources = Vec::with_capacity(captions.len());
    for c in captions {
        let t = tokenize(c.as_ref())?;
        tokens.extend(t.tokens);
        sources.push(t.source);
    }
    Ok(Text {
        source: sources.join(" "),
        tokens,
    })
}

/// Frame indices `floor(i * n_frames / n)` for `i in 0..n`.
pub fn uniform_indices(n_frames: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| i * n_frames / n).collect()
}

pub fn uniform_sample_frames(video: &Video, n: usize) -> Result<Video> {
    if n == 0 {
        return Err(Error::invalid("cannot sample zero frames"));
    }
    video.gather(&uniform_indices(video.n_frames(), n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub video: Video,
    pub caption: Text,
    pub extra_captions: Vec<Text>,
}

impl PairedSample {
    /// Primary caption followed by the extra ones.
    pub fn all_captions(&self) -> impl Iterator<Item = &Text> {
        std::iter::once(&self.caption).chain(self.extra_captions.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub samples: Vec<PairedSample>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, samples: Vec<PairedSample>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { name, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frame_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.video.dim())
    }
}

/// Gallery data must never overlap training data.
pub fn check_disjoint(train: &DatasetSplit, test: &DatasetSplit) -> Result<()> {
    let ids: HashSet<&str> = train.samples.iter().map(|s| s.id.as_str()).collect();
    match test.samples.iter().find(|s| ids.contains(s.id.as_str())) {
        Some(s) => Err(Error::invalid(format!(
            "sample {:?} appears in both train and test",
            s.id
        ))),
        None => Ok(()),
    }
}

pub fn write_frames(path: &Path, video: &Video) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(FRAMES_MAGIC)?;
        w.write_u32::<LittleEndian>(FRAMES_VERSION)?;
        w.write_u32::<LittleEndian>(video.n_frames() as u32)?;
        w.write_u32::<LittleEndian>(video.dim() as u32)?;
        for &x in video.as_flat() {
            w.write_f32::<LittleEndian>(x)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_frames(path: &Path, id: &str) -> Result<Video> {
    let bad = |message: String| Error::BadFormat {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != FRAMES_MAGIC {
        return Err(bad("missing VTRF header".into()));
    }
    let mut r = &bytes[4..];
    let version = r.read_u32::<LittleEndian>().unwrap();
    let n_frames = r.read_u32::<LittleEndian>().unwrap() as usize;
    let dim = r.read_u32::<LittleEndian>().unwrap() as usize;
    if version != FRAMES_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if n_frames == 0 || dim == 0 {
        return Err(bad(format!("empty shape {n_frames}x{dim}")));
    }
    let expected = n_frames * dim * 4;
    if r.len() != expected {
        return Err(bad(format!(
            "payload is {} bytes, header implies {expected}",
            r.len()
        )));
    }
    let mut data = vec![0f32; n_frames * dim];
    r.read_f32_into::<LittleEndian>(&mut data).unwrap();
    Video::from_flat(id, dim, data)
}

/// One manifest line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub caption: String,
    #[serde(default)]
    pub extra_captions: Vec<String>,
    pub frames: String,
    pub n_frames: usize,
}

pub fn load_manifest(path: &Path, name: SplitName) -> Result<DatasetSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let malformed = |line: usize, message: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut samples: Vec<PairedSample> = Vec::new();
    let mut seen = HashSet::new();
    let mut dim: Option<(usize, String)> = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        let caption = tokenize(&rec.caption).map_err(|e| malformed(lineno, e.to_string()))?;
        let extra_captions = rec
            .extra_captions
            .iter()
            .map(|c| tokenize(c))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| malformed(lineno, e.to_string()))?;
        let video = read_frames(&base.join(&rec.frames), &rec.id)?;
        if video.n_frames() != rec.n_frames {
            return Err(malformed(
                lineno,
                format!(
                    "declares {} frames, file holds {}",
                    rec.n_frames,
                    video.n_frames()
                ),
            ));
        }
        match &dim {
            None => dim = Some((video.dim(), rec.id.clone())),
            Some((d, first)) if *d != video.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: *d,
                    actual: video.dim(),
                    context: format!("record {:?} (line {lineno}) vs {first:?}", rec.id),
                })
            }
            Some(_) => {}
        }
        samples.push(PairedSample {
            id: rec.id,
            video,
            caption,
            extra_captions,
        });
    }
    if samples.is_empty() {
        return Err(Error::NoRecords {
            path: path.to_path_buf(),
        });
    }
    DatasetSplit::new(name, samples)
}

fn frames_file_name(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:06}_{clean}.vtrf")
}

/// Writes `split` as a manifest at `path` with frame files under `<dir>/frames_<split>/`.
pub fn save_manifest(split: &DatasetSplit, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let sub = match split.name {
        SplitName::Train => "frames_train",
        SplitName::Test => "frames_test",
    };
    let frames_dir = base.join(sub);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut out = String::new();
    for (i, s) in split.samples.iter().enumerate() {
        let rel = format!("{sub}/{}", frames_file_name(i, &s.id));
        write_frames(&base.join(&rel), &s.video)?;
        let rec = ManifestRecord {
            id: s.id.clone(),
            caption: s.caption.source().to_string(),
            extra_captions: s
                .extra_captions
                .iter()
                .map(|t| t.source().to_string())
                .collect(),
            frames: rel,
            n_frames: s.video.n_frames(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn video(id: &str, n: usize, dim: usize) -> Video {
        let frames = (0..n)
            .map(|i| (0..dim).map(|j| (i * dim + j) as f32).collect())
            .collect();
        Video::new(id, frames).unwrap()
    }

    fn sample(id: &str, caption: &str, n: usize, dim: usize) -> PairedSample {
        PairedSample {
            id: id.into(),
            video: video(id, n, dim),
            caption: tokenize(caption).unwrap(),
            extra_captions: vec![],
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("A Dog runs!").unwrap().tokens(),
            ["a", "dog", "runs"]
        );
        assert_eq!(tokenize("x").unwrap().tokens(), ["x"]);
        assert!(tokenize("   ").is_err());
        assert!(tokenize("").is_err());
        assert!(tokenize("?!").is_err());
    }

    #[test]
    fn uniform_sampling_examples() {
        let exp: Vec<usize> = (0..12).map(|i| 2 * i).collect();
        assert_eq!(uniform_indices(24, 12), exp);
        assert_eq!(uniform_indices(7, 7), (0..7).collect::<Vec<_>>());
        assert_eq!(
            uniform_indices(5, 12),
            vec![0, 0, 0, 1, 1, 2, 2, 2, 3, 3, 4, 4]
        );
        let v = video("v", 5, 3);
        let s = uniform_sample_frames(&v, 12).unwrap();
        assert_eq!(s.n_frames(), 12);
        assert_eq!(s.frame(3), v.frame(1));
        assert!(uniform_sample_frames(&v, 0).is_err());
        assert_eq!(uniform_sample_frames(&v, 5).unwrap(), v);
    }

    #[test]
    fn concat_examples() {
        let one = concat_captions(&["a dog"]).unwrap();
        assert_eq!(one.source(), "a dog");
        assert_eq!(one.tokens(), ["a", "dog"]);
        let two = concat_captions(&["a dog", "it runs"]).unwrap();
        assert_eq!(two.tokens(), ["a", "dog", "it", "runs"]);
        assert_eq!(two.source(), "a dog it runs");
        assert!(concat_captions(&["x", "", "y"]).is_err());
        assert!(concat_captions::<&str>(&[]).is_err());
    }

    #[test]
    fn video_invariants() {
        assert!(Video::new("v", vec![]).is_err());
        assert!(Video::new("v", vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Video::new("v", vec![vec![f32::NAN]]).is_err());
    }

    #[test]
    fn manifest_round_trip_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let split = DatasetSplit::new(
            SplitName::Train,
            vec![
                sample("b/1", "Second one", 3, 4),
                sample("a", "first", 2, 4),
            ],
        )
        .unwrap();
        let p1 = dir.path().join("train.jsonl");
        save_manifest(&split, &p1).unwrap();
        let loaded = load_manifest(&p1, SplitName::Train).unwrap();
        assert_eq!(loaded.samples[0].id, "b/1");
        assert_eq!(loaded.samples[1].id, "a");
        assert_eq!(loaded.samples[0].video, split.samples[0].video);

        let dir2 = tempfile::tempdir().unwrap();
        let p2 = dir2.path().join("train.jsonl");
        save_manifest(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        let f1 = dir.path().join("frames_train/000000_b_1.vtrf");
        let f2 = dir2.path().join("frames_train/000000_b_1.vtrf");
        assert_eq!(fs::read(f1).unwrap(), fs::read(f2).unwrap());
        assert_eq!(load_manifest(&p2, SplitName::Train).unwrap(), loaded);
    }

    #[test]
    fn manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        let err = load_manifest(&empty, SplitName::Train).unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");

        write_frames(&dir.path().join("a.vtrf"), &video("a", 2, 16)).unwrap();
        write_frames(&dir.path().join("b.vtrf"), &video("b", 2, 32)).unwrap();
        let mixed = dir.path().join("mixed.jsonl");
        fs::write(
            &mixed,
            concat!(
                r#"{"id":"a","caption":"x","frames":"a.vtrf","n_frames":2}"#,
                "\n",
                r#"{"id":"b","caption":"y","frames":"b.vtrf","n_frames":2}"#,
                "\n"
            ),
        )
        .unwrap();
        let err = load_manifest(&mixed, SplitName::Train).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");

        let dup = dir.path().join("dup.jsonl");
        fs::write(
            &dup,
            concat!(
                r#"{"id":"a","caption":"x","frames":"a.vtrf","n_frames":2}"#,
                "\n",
                r#"{"id":"a","caption":"y","frames":"a.vtrf","n_frames":2}"#,
                "\n"
            ),
        )
        .unwrap();
        assert!(matches!(
            load_manifest(&dup, SplitName::Train),
            Err(Error::DuplicateId(_))
        ));

        let bad = dir.path().join("bad.jsonl");
        fs::write(
            &bad,
            concat!(
                r#"{"id":"a","caption":"x","frames":"a.vtrf","n_frames":2}"#,
                "\n",
                "{not json\n"
            ),
        )
        .unwrap();
        match load_manifest(&bad, SplitName::Train) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }

        let count = dir.path().join("count.jsonl");
        fs::write(
            &count,
            r#"{"id":"a","caption":"x","frames":"a.vtrf","n_frames":3}"#,
        )
        .unwrap();
        assert!(load_manifest(&count, SplitName::Train).is_err());

        assert!(load_manifest(&dir.path().join("missing.jsonl"), SplitName::Train).is_err());
    }

    #[test]
    fn frames_reader_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.vtrf");
        write_frames(&p, &video("v", 2, 3)).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 3 * 4);
        assert_eq!(&bytes[..4], b"VTRF");
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_frames(&p, "v"), Err(Error::BadFormat { .. })));
    }

    #[test]
    fn disjoint_check() {
        let a = DatasetSplit::new(SplitName::Train, vec![sample("a", "x", 1, 2)]).unwrap();
        let b = DatasetSplit::new(SplitName::Test, vec![sample("b", "y", 1, 2)]).unwrap();
        let c = DatasetSplit::new(SplitName::Test, vec![sample("a", "y", 1, 2)]).unwrap();
        assert!(check_disjoint(&a, &b).is_ok());
        assert!(check_disjoint(&a, &c).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_is_case_insensitive(s in "[a-zA-Z0-9 ,.!]{0,40}") {
            match (tokenize(&s), tokenize(&s.to_uppercase())) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.tokens(), b.tokens()),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "inconsistent tokenization"),
            }
        }

        #[test]
        fn uniform_indices_monotone_and_in_range(n_frames in 1usize..100, n in 1usize..100) {
            let idx = uniform_indices(n_frames, n);
            prop_assert_eq!(idx.len(), n);
            prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(idx.iter().all(|&i| i < n_frames));
        }
    }
}
