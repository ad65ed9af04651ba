//! Dataset ingestion (IDX, CSV), byte normalization and the versioned
//! binary model format.
//!
//! Model file layout (all integers little-endian, reals IEEE-754 f64 LE):
//!
//! ```text
//! "DDRSMDL" version:u8
//! payload:
//!   master_seed:u64 pca_dims:u32 n_layers:u32
//!   per layer:  len:u64 then
//!     v_count:u32 k:u32 a:f64 r:f64 kernel:u8 input_dim:u64 center_kind:u8
//!     per clustering: d_sub:u32 feature_indices:[u32; d_sub]
//!                     dense  -> centers:[f64; d_sub * k] row-major
//!                     binary -> centers:[u64; d_sub * ceil(k / 64)] packed rows
//!   pca: len:u64 then input_dim:u64 m:u32 mean:[f64; D]
//!        projection:[f64; D * m] row-major eigenvalues:[f64; m]
//! crc32:u32 over the payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use crate::bits::BitMatrix;
use crate::error::{DdrsError, Result};
use crate::model::{
    Centers, ClusteringModel, Dataset, DdrsModel, Kernel, LayerModel, LayerParams, PcaModel,
    FORMAT_VERSION,
};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MODEL_MAGIC: &[u8; 7] = b"DDRSMDL";

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_header(bytes: &[u8], magic: u32, dims: usize, path: &Path) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(DdrsError::TruncatedFile(format!(
            "{}: missing IDX magic",
            path.display()
        )));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DdrsError::BadMagic {
            expected: format!("{magic:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    let header = 4 + 4 * dims;
    if bytes.len() < header {
        return Err(DdrsError::TruncatedFile(format!(
            "{}: IDX header cut short",
            path.display()
        )));
    }
    Ok((0..dims)
        .map(|i| be_u32(bytes, 4 + 4 * i) as usize)
        .collect())
}

fn check_payload(bytes: &[u8], header: usize, expected: usize, path: &Path) -> Result<()> {
    let have = bytes.len() - header;
    if have < expected {
        return Err(DdrsError::TruncatedFile(format!(
            "{}: header promises {expected} data bytes, file has {have}",
            path.display()
        )));
    }
    if have > expected {
        return Err(DdrsError::Corrupt(format!(
            "{}: {} unexpected trailing bytes",
            path.display(),
            have - expected
        )));
    }
    Ok(())
}

/// Reads an IDX image file (magic `0x00000803`, dims `[n, rows, cols]`) into
/// an `n x (rows * cols)` matrix of raw byte values.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let dims = read_header(&bytes, IDX_IMAGES_MAGIC, 3, path)?;
    let (n, d) = (dims[0], dims[1] * dims[2]);
    check_payload(&bytes, 16, n * d, path)?;
    Ok(Array2::from_shape_fn((n, d), |(i, j)| {
        bytes[16 + i * d + j] as f64
    }))
}

/// Reads an IDX label file (magic `0x00000801`).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let dims = read_header(&bytes, IDX_LABELS_MAGIC, 1, path)?;
    check_payload(&bytes, 8, dims[0], path)?;
    Ok(bytes[8..].iter().map(|&b| b as u32).collect())
}

/// Writes `n` images of `rows x cols` bytes in IDX format.
pub fn write_idx_images(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(DdrsError::invalid(
            "pixels",
            "pixel count is not a multiple of rows * cols",
        ));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        (pixels.len() / per) as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

/// Divides byte-valued entries by 255.
pub fn normalize_bytes(mut data: Array2<f64>) -> Result<Array2<f64>> {
    if let Some((index, &value)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=255.0).contains(*v))
    {
        return Err(DdrsError::OutOfRange { index, value });
    }
    data.mapv_inplace(|v| v / 255.0);
    Ok(data)
}

/// Loads an IDX image file (normalized to [0, 1]) and optional labels.
pub fn load_idx_dataset(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<Dataset> {
    let features = normalize_bytes(load_idx_images(images)?)?;
    let labels = labels.map(load_idx_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != features.nrows() {
            return Err(DdrsError::LengthMismatch {
                what: "IDX labels vs images",
                left: l.len(),
                right: features.nrows(),
            });
        }
    }
    Dataset::new(features, labels)
}

/// Parses a numeric table. With `has_labels` the last column holds
/// non-negative integer labels. No quoting; blank lines are skipped.
pub fn parse_csv(text: &str, has_labels: bool, delimiter: u8) -> Result<Dataset> {
    let delim = delimiter as char;
    let mut width: Option<usize> = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (row, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(DdrsError::RaggedRows {
                    row,
                    expected: w,
                    found: fields.len(),
                })
            }
            _ => {}
        }
        let feature_count = if has_labels {
            fields.len() - 1
        } else {
            fields.len()
        };
        for (column, field) in fields[..feature_count].iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|e| DdrsError::ParseError {
                row,
                column,
                message: format!("{field:?}: {e}"),
            })?;
            if !v.is_finite() {
                return Err(DdrsError::ParseError {
                    row,
                    column,
                    message: format!("{field:?} is not finite"),
                });
            }
            values.push(v);
        }
        if has_labels {
            let field = fields[feature_count].trim();
            let label: u32 = field.parse().map_err(|e| DdrsError::ParseError {
                row,
                column: feature_count,
                message: format!("label {field:?}: {e}"),
            })?;
            labels.push(label);
        }
        n += 1;
    }
    let w = width.ok_or_else(|| DdrsError::DegenerateInput("CSV has no rows".into()))?;
    let d = if has_labels { w - 1 } else { w };
    let features = Array2::from_shape_vec((n, d), values).expect("rectangular");
    Dataset::new(features, has_labels.then_some(labels))
}

pub fn load_csv(path: impl AsRef<Path>, has_labels: bool, delimiter: u8) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, has_labels, delimiter)
}

/// Writes an embedding with header `e0,...,e{m-1}`. Reals use the shortest
/// representation that round-trips exactly.
pub fn write_embedding_csv(mut w: impl Write, embedding: ArrayView2<'_, f64>) -> Result<()> {
    let header: Vec<String> = (0..embedding.ncols()).map(|j| format!("e{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in embedding.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_embedding_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DdrsError::DegenerateInput("embedding CSV is empty".into()))?;
    let m = header.split(',').count();
    for (j, name) in header.split(',').enumerate() {
        if name.trim() != format!("e{j}") {
            return Err(DdrsError::ParseError {
                row: 0,
                column: j,
                message: format!("expected header e{j}, found {name:?}"),
            });
        }
    }
    let body: String = lines.collect::<Vec<_>>().join("\n");
    let ds = parse_csv(&body, false, b',').map_err(|e| match e {
        DdrsError::ParseError {
            row,
            column,
            message,
        } => DdrsError::ParseError {
            row: row + 1,
            column,
            message,
        },
        DdrsError::RaggedRows {
            row,
            expected,
            found,
        } => DdrsError::RaggedRows {
            row: row + 1,
            expected,
            found,
        },
        other => other,
    })?;
    if ds.d() != m {
        return Err(DdrsError::RaggedRows {
            row: 1,
            expected: m,
            found: ds.d(),
        });
    }
    Ok(ds.into_parts().0)
}

/// Reads labels as one non-negative integer per line.
pub fn load_label_lines(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(row, l)| {
            l.trim().parse().map_err(|e| DdrsError::ParseError {
                row,
                column: 0,
                message: format!("label {l:?}: {e}"),
            })
        })
        .collect()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    /// Writes a u64 length placeholder, runs `body`, then patches the length.
    fn section(&mut self, body: impl FnOnce(&mut Writer)) {
        let at = self.0.len();
        self.u64(0);
        body(self);
        let len = (self.0.len() - at - 8) as u64;
        self.0[at..at + 8].copy_from_slice(&len.to_le_bytes());
    }
}

fn to_u32(v: usize, what: &'static str) -> u32 {
    u32::try_from(v).unwrap_or_else(|_| panic!("{what} = {v} does not fit the model format"))
}

/// Serializes a model to bytes. The same model always yields the same bytes.
pub fn model_to_bytes(model: &DdrsModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u8(FORMAT_VERSION);
    w.u64(model.master_seed());
    w.u32(to_u32(model.pca().output_dim(), "pca_dims"));
    w.u32(to_u32(model.layers().len(), "layer count"));
    for layer in model.layers() {
        w.section(|w| {
            let p = layer.params();
            w.u32(to_u32(p.v_count, "v_count"));
            w.u32(to_u32(p.k, "k"));
            w.f64(p.a);
            w.f64(p.r);
            w.u8(p.kernel.tag());
            w.u64(layer.input_dim() as u64);
            w.u8(if layer.is_bottom() { 0 } else { 1 });
            for c in layer.clusterings() {
                w.u32(to_u32(c.feature_indices().len(), "d_sub"));
                for &f in c.feature_indices() {
                    w.u32(f);
                }
                match c.centers() {
                    Centers::Dense(m) => m.iter().for_each(|&v| w.f64(v)),
                    Centers::Binary(b) => b.words().iter().for_each(|&v| w.u64(v)),
                }
            }
        });
    }
    w.section(|w| {
        let pca = model.pca();
        w.u64(pca.input_dim() as u64);
        w.u32(to_u32(pca.output_dim(), "pca_dims"));
        pca.mean().iter().for_each(|&v| w.f64(v));
        pca.projection().iter().for_each(|&v| w.f64(v));
        pca.eigenvalues().iter().for_each(|&v| w.f64(v));
    });
    let crc = crc32fast::hash(&w.0[8..]);
    w.u32(crc);
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                DdrsError::Corrupt(format!("unexpected end of data at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?)
            .map_err(|_| DdrsError::Corrupt("size does not fit in memory".into()))
    }
    /// Guards allocations against garbage lengths.
    fn need(&self, count: usize, width: usize) -> Result<()> {
        match count.checked_mul(width) {
            Some(b) if b <= self.bytes.len() - self.pos => Ok(()),
            _ => Err(DdrsError::Corrupt(format!(
                "declared length {count} exceeds remaining data"
            ))),
        }
    }
    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        self.need(count, 8)?;
        (0..count).map(|_| self.f64()).collect()
    }
    fn section(&mut self) -> Result<Reader<'a>> {
        let len = self.usize()?;
        Ok(Reader {
            bytes: self.take(len)?,
            pos: 0,
        })
    }
    fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(DdrsError::Corrupt(format!(
                "{} unread bytes at the end of {what}",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn corrupt(e: DdrsError) -> DdrsError {
    match e {
        DdrsError::Corrupt(_) => e,
        other => DdrsError::Corrupt(format!("stored model violates an invariant: {other}")),
    }
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<DdrsModel> {
    let prefix = &bytes[..bytes.len().min(7)];
    if prefix != &MODEL_MAGIC[..prefix.len()] {
        return Err(DdrsError::BadMagic {
            expected: "DDRSMDL".into(),
            found: String::from_utf8_lossy(prefix).into_owned(),
        });
    }
    if bytes.len() < 8 + 4 {
        return Err(DdrsError::Corrupt(
            "file too short for header and checksum".into(),
        ));
    }
    if bytes[7] != FORMAT_VERSION {
        return Err(DdrsError::VersionMismatch {
            found: bytes[7],
            supported: FORMAT_VERSION,
        });
    }
    let (payload, tail) = bytes[8..].split_at(bytes.len() - 12);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(DdrsError::Corrupt(format!(
            "checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"
        )));
    }
    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let master_seed = r.u64()?;
    let pca_dims = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let mut s = r.section()?;
        let v_count = s.u32()? as usize;
        let k = s.u32()? as usize;
        let a = s.f64()?;
        let rr = s.f64()?;
        let kernel = Kernel::from_tag(s.u8()?)
            .ok_or_else(|| DdrsError::Corrupt("unknown kernel tag".into()))?;
        let params = LayerParams::new(v_count, k, a, rr, kernel).map_err(corrupt)?;
        let input_dim = s.usize()?;
        let binary = match s.u8()? {
            0 => false,
            1 => true,
            t => return Err(DdrsError::Corrupt(format!("unknown center kind {t}"))),
        };
        s.need(v_count, 4)?;
        let mut clusterings = Vec::with_capacity(v_count);
        for _ in 0..v_count {
            let d_sub = s.u32()? as usize;
            s.need(d_sub, 4)?;
            let features = (0..d_sub).map(|_| s.u32()).collect::<Result<Vec<u32>>>()?;
            let centers = if binary {
                let words = d_sub * k.div_ceil(64);
                s.need(words, 8)?;
                let words = (0..words).map(|_| s.u64()).collect::<Result<Vec<u64>>>()?;
                Centers::Binary(BitMatrix::from_words(d_sub, k, words).ok_or_else(|| {
                    DdrsError::Corrupt("packed centers have padding bits set".into())
                })?)
            } else {
                s.need(d_sub, 8 * k)?;
                let values = s.f64s(d_sub * k)?;
                Centers::Dense(Array2::from_shape_vec((d_sub, k), values).expect("sized above"))
            };
            clusterings.push(ClusteringModel::new(features, centers).map_err(corrupt)?);
        }
        s.finish("layer section")?;
        layers.push(LayerModel::new(params, clusterings, input_dim).map_err(corrupt)?);
    }
    let mut s = r.section()?;
    let d = s.usize()?;
    let m = s.u32()? as usize;
    if m != pca_dims {
        return Err(DdrsError::Corrupt(format!(
            "PCA section has {m} components, header says {pca_dims}"
        )));
    }
    s.need(d, 8)?;
    let mean = Array1::from(s.f64s(d)?);
    s.need(d, 8 * m)?;
    let projection = Array2::from_shape_vec((d, m), s.f64s(d * m)?).expect("sized above");
    let eigenvalues = s.f64s(m)?;
    s.finish("PCA section")?;
    r.finish("payload")?;
    let pca = PcaModel::new(mean, projection, eigenvalues).map_err(corrupt)?;
    DdrsModel::new(layers, pca, master_seed).map_err(corrupt)
}

pub fn save_model(model: &DdrsModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DdrsModel> {
    model_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::fit_model;
    use crate::model::ModelConfig;
    use ndarray::array;

    fn tiny_model() -> DdrsModel {
        let x = Array2::from_shape_fn((24, 6), |(i, j)| ((i * 5 + j * 11) % 13) as f64 / 13.0);
        let data = Dataset::new(x, None).unwrap();
        let cfg = ModelConfig {
            master_seed: 77,
            layers: vec![
                LayerParams::new(3, 4, 0.5, 0.5, Kernel::Euclidean).unwrap(),
                LayerParams::new(2, 70, 0.75, 0.25, Kernel::Linear)
                    .unwrap()
                    .with_k(5),
            ],
            pca_dims: 3,
        };
        fit_model(&data, &cfg).unwrap()
    }

    impl LayerParams {
        fn with_k(mut self, k: usize) -> Self {
            self.k = k;
            self
        }
    }

    #[test]
    fn model_round_trip_is_exact_and_deterministic() {
        let model = tiny_model();
        let bytes = model_to_bytes(&model);
        assert_eq!(&bytes[..7], b"DDRSMDL");
        assert_eq!(bytes[7], FORMAT_VERSION);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(model_to_bytes(&back), bytes);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = model_to_bytes(&tiny_model());
        assert!(matches!(
            model_from_bytes(&bytes[..bytes.len() - 1]),
            Err(DdrsError::Corrupt(_))
        ));
        assert!(matches!(
            model_from_bytes(&bytes[..40]),
            Err(DdrsError::Corrupt(_))
        ));
        assert!(matches!(
            model_from_bytes(&bytes[..9]),
            Err(DdrsError::Corrupt(_))
        ));

        let mut flipped = bytes.clone();
        flipped[100] ^= 0x10;
        assert!(matches!(
            model_from_bytes(&flipped),
            Err(DdrsError::Corrupt(_))
        ));

        let mut version = bytes.clone();
        version[7] = 9;
        assert!(matches!(
            model_from_bytes(&version),
            Err(DdrsError::VersionMismatch { found: 9, .. })
        ));

        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(
            model_from_bytes(&magic),
            Err(DdrsError::BadMagic { .. })
        ));
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..3 * 2 * 2).map(|i| (i * 20) as u8).collect();
        write_idx_images(dir.path().join("img"), 2, 2, &pixels).unwrap();
        write_idx_labels(dir.path().join("lab"), &[7, 0, 9]).unwrap();
        let img = load_idx_images(dir.path().join("img")).unwrap();
        assert_eq!(img.dim(), (3, 4));
        assert_eq!(img.iter().map(|&v| v as u8).collect::<Vec<_>>(), pixels);
        assert_eq!(
            load_idx_labels(dir.path().join("lab")).unwrap(),
            vec![7, 0, 9]
        );
        let ds = load_idx_dataset(dir.path().join("img"), Some(&dir.path().join("lab"))).unwrap();
        assert_eq!(ds.features()[[0, 1]], 20.0 / 255.0);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        write_idx_labels(&p, &[]).unwrap();
        assert_eq!(load_idx_labels(&p).unwrap(), Vec::<u32>::new());
        assert!(matches!(
            load_idx_images(&p),
            Err(DdrsError::BadMagic { .. })
        ));

        let mut truncated = Vec::new();
        for v in [IDX_IMAGES_MAGIC, 2, 2, 2] {
            truncated.extend_from_slice(&v.to_be_bytes());
        }
        truncated.extend_from_slice(&[1, 2, 3]);
        fs::write(&p, &truncated).unwrap();
        assert!(matches!(
            load_idx_images(&p),
            Err(DdrsError::TruncatedFile(_))
        ));
        fs::write(&p, [0u8, 0]).unwrap();
        assert!(matches!(
            load_idx_labels(&p),
            Err(DdrsError::TruncatedFile(_))
        ));

        write_idx_images(&p, 1, 2, &[1, 2, 3, 4]).unwrap();
        write_idx_labels(dir.path().join("l"), &[1]).unwrap();
        assert!(matches!(
            load_idx_dataset(&p, Some(&dir.path().join("l"))),
            Err(DdrsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn normalization() {
        let out = normalize_bytes(array![[255.0, 0.0, 51.0]]).unwrap();
        assert_eq!(out, array![[1.0, 0.0, 0.2]]);
        assert!(matches!(
            normalize_bytes(array![[256.0]]),
            Err(DdrsError::OutOfRange { index: 0, .. })
        ));
        assert!(normalize_bytes(array![[-1.0]]).is_err());
    }

    #[test]
    fn csv_parsing() {
        let ds = parse_csv("1,2,0\n3,4,1\n", true, b',').unwrap();
        assert_eq!(ds.features(), array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(ds.labels(), Some(&[0, 1][..]));
        let semi = parse_csv("1;2\n3;4", false, b';').unwrap();
        assert_eq!(semi.d(), 2);
        assert!(matches!(
            parse_csv("1,2\n3\n", false, b','),
            Err(DdrsError::RaggedRows {
                row: 1,
                expected: 2,
                found: 1
            })
        ));
        assert!(matches!(
            parse_csv("1,nan\n", false, b','),
            Err(DdrsError::ParseError {
                row: 0,
                column: 1,
                ..
            })
        ));
        assert!(matches!(
            parse_csv("1,x\n", false, b','),
            Err(DdrsError::ParseError {
                row: 0,
                column: 1,
                ..
            })
        ));
        assert!(matches!(
            parse_csv("1,2,-1\n", true, b','),
            Err(DdrsError::ParseError { column: 2, .. })
        ));
    }

    #[test]
    fn embedding_csv_round_trip() {
        let e = array![[0.1, -2.5e-17], [3.0, 1.0 / 3.0]];
        let mut buf = Vec::new();
        write_embedding_csv(&mut buf, e.view()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("e0,e1\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, text).unwrap();
        assert_eq!(read_embedding_csv(&p).unwrap(), e);
    }
}
