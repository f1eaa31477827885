//! Binary artifact formats. All integers and floats are little-endian.
//!
//! | magic  | contents                          | header bytes |
//! |--------|-----------------------------------|--------------|
//! | `VADF` | feature grid or score map         | 20           |
//! | `VADG` | per-position Gaussian model       | 25           |
//! | `VADB` | raw memory bank with provenance   | 16           |
//! | `VADQ` | product-quantized memory bank     | 24           |
//!
//! Readers load the whole file and check the declared payload against its
//! length, so a short file reports `Truncated` rather than a bare EOF.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use vadlite_core::pq::{code_row_bytes, pack_code, unpack_code};
use vadlite_core::{
    Codebooks, CompressedBank, DiagGaussianGrid, FeatureGrid, FullGaussianGrid, MemoryBank,
    Provenance, ScoreGrid,
};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub const FEATURE_MAGIC: [u8; 4] = *b"VADF";
pub const GAUSSIAN_MAGIC: [u8; 4] = *b"VADG";
pub const BANK_MAGIC: [u8; 4] = *b"VADB";
pub const COMPRESSED_MAGIC: [u8; 4] = *b"VADQ";

pub const FEATURE_HEADER_BYTES: u64 = 20;
pub const GAUSSIAN_HEADER_BYTES: u64 = 25;
pub const BANK_HEADER_BYTES: u64 = 16;
pub const COMPRESSED_HEADER_BYTES: u64 = 24;

const KIND_FULL: u8 = 0;
const KIND_DIAG: u8 = 1;

/// Size of a feature file holding `h × w × d` values.
pub fn feature_file_bytes(h: usize, w: usize, d: usize) -> u64 {
    FEATURE_HEADER_BYTES + 4 * (h * w * d) as u64
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<u64> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Header reader over an in-memory file, carrying the path for error messages.
struct Reader<'a> {
    path: &'a Path,
    cur: Cursor<&'a [u8]>,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, bytes: &'a [u8], magic: [u8; 4], header: u64) -> Result<Self> {
        if (bytes.len() as u64) < header {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: header,
                found: bytes.len() as u64,
            });
        }
        let found: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if found != magic {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: magic,
                found,
            });
        }
        let mut r = Self {
            path,
            cur: Cursor::new(bytes),
        };
        r.cur.set_position(4);
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                version,
            });
        }
        Ok(r)
    }

    fn u32(&mut self) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|e| Error::io(self.path, e))
    }

    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(|e| Error::io(self.path, e))
    }

    fn f32(&mut self) -> Result<f32> {
        self.cur.read_f32::<LE>().map_err(|e| Error::io(self.path, e))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let v = self.u32()? as usize;
        if v == 0 {
            return Err(Error::format(self.path, format!("{what} must be positive")));
        }
        Ok(v)
    }

    /// Checks that exactly `payload` bytes remain.
    fn expect_payload(&self, payload: u64) -> Result<()> {
        let total = self.cur.get_ref().len() as u64;
        let expected = self.cur.position() + payload;
        if total < expected {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected,
                found: total,
            });
        }
        if total > expected {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes after payload", total - expected),
            ));
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = vec![0.0f32; n];
        self.cur
            .read_f32_into::<LE>(&mut out)
            .map_err(|e| Error::io(self.path, e))?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(self.path, "non-finite value in payload"));
        }
        Ok(out)
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut out = vec![0u8; n];
        self.cur
            .read_exact(&mut out)
            .map_err(|e| Error::io(self.path, e))?;
        Ok(out)
    }
}

fn header(buf: &mut Vec<u8>, magic: [u8; 4]) {
    buf.extend_from_slice(&magic);
    buf.write_u32::<LE>(FORMAT_VERSION).unwrap();
}

fn put_f32s<I: IntoIterator<Item = f32>>(buf: &mut Vec<u8>, values: I) {
    for v in values {
        buf.write_f32::<LE>(v).unwrap();
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit in u32")))?;
    buf.write_u32::<LE>(v).unwrap();
    Ok(())
}

pub fn encode_grid(height: usize, width: usize, dim: usize, values: &[f32]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(feature_file_bytes(height, width, dim) as usize);
    header(&mut buf, FEATURE_MAGIC);
    put_u32(&mut buf, height)?;
    put_u32(&mut buf, width)?;
    put_u32(&mut buf, dim)?;
    put_f32s(&mut buf, values.iter().copied());
    Ok(buf)
}

/// Writes a feature grid and returns the byte count, `20 + 4·H·W·d`.
pub fn write_feature_file(grid: &FeatureGrid, path: &Path) -> Result<u64> {
    let (h, w, d) = grid.shape();
    write_file(path, &encode_grid(h, w, d, grid.as_slice())?)
}

pub fn decode_feature_bytes(path: &Path, bytes: &[u8]) -> Result<FeatureGrid> {
    let mut r = Reader::open(path, bytes, FEATURE_MAGIC, FEATURE_HEADER_BYTES)?;
    let h = r.dim("height")?;
    let w = r.dim("width")?;
    let d = r.dim("dimension")?;
    r.expect_payload(4 * (h * w * d) as u64)?;
    let values = r.f32s(h * w * d)?;
    Ok(FeatureGrid::new(h, w, d, values)?)
}

/// Reads only the 20-byte header: `(H*, W*, d)`.
pub fn read_feature_header(path: &Path) -> Result<(usize, usize, usize)> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; FEATURE_HEADER_BYTES as usize];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::open(path, &head[..n], FEATURE_MAGIC, FEATURE_HEADER_BYTES)?;
    Ok((r.dim("height")?, r.dim("width")?, r.dim("dimension")?))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureGrid> {
    decode_feature_bytes(path, &read_file(path)?)
}

/// Score grids share the feature layout with `d = 1`.
pub fn write_score_grid(grid: &ScoreGrid, path: &Path) -> Result<u64> {
    write_file(path, &encode_grid(grid.height(), grid.width(), 1, grid.values())?)
}

pub fn read_score_grid(path: &Path) -> Result<ScoreGrid> {
    let g = read_feature_file(path)?;
    if g.dim() != 1 {
        return Err(Error::format(path, format!("score grid has depth {}, expected 1", g.dim())));
    }
    Ok(ScoreGrid::new(g.height(), g.width(), g.into_vec())?)
}

/// A Gaussian model as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum GaussianModelFile {
    Full(FullGaussianGrid),
    Diag(DiagGaussianGrid),
}

fn gaussian_header(buf: &mut Vec<u8>, kind: u8, shape: (usize, usize, usize), epsilon: f64) -> Result<()> {
    header(buf, GAUSSIAN_MAGIC);
    buf.push(kind);
    put_u32(buf, shape.0)?;
    put_u32(buf, shape.1)?;
    put_u32(buf, shape.2)?;
    buf.write_f32::<LE>(epsilon as f32).unwrap();
    Ok(())
}

pub fn encode_diag_model(model: &DiagGaussianGrid) -> Result<Vec<u8>> {
    let (h, w, d) = model.shape();
    let mut buf = Vec::new();
    gaussian_header(&mut buf, KIND_DIAG, (h, w, d), model.epsilon())?;
    for p in 0..h * w {
        put_f32s(&mut buf, model.mean(p).iter().map(|&v| v as f32));
        put_f32s(&mut buf, model.variance(p).iter().map(|&v| v as f32));
    }
    Ok(buf)
}

pub fn encode_full_model(model: &FullGaussianGrid) -> Result<Vec<u8>> {
    let (h, w, d) = model.shape();
    let mut buf = Vec::new();
    gaussian_header(&mut buf, KIND_FULL, (h, w, d), model.epsilon())?;
    for p in 0..h * w {
        put_f32s(&mut buf, model.mean(p).iter().map(|&v| v as f32));
        put_f32s(&mut buf, model.covariance(p).iter().map(|&v| v as f32));
        put_f32s(&mut buf, model.precision(p).iter().map(|&v| v as f32));
    }
    Ok(buf)
}

pub fn write_diag_model(model: &DiagGaussianGrid, path: &Path) -> Result<u64> {
    write_file(path, &encode_diag_model(model)?)
}

pub fn write_full_model(model: &FullGaussianGrid, path: &Path) -> Result<u64> {
    write_file(path, &encode_full_model(model)?)
}

pub fn write_gaussian_model(model: &GaussianModelFile, path: &Path) -> Result<u64> {
    match model {
        GaussianModelFile::Full(m) => write_full_model(m, path),
        GaussianModelFile::Diag(m) => write_diag_model(m, path),
    }
}

pub fn read_gaussian_model(path: &Path) -> Result<GaussianModelFile> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(path, &bytes, GAUSSIAN_MAGIC, GAUSSIAN_HEADER_BYTES)?;
    let kind = r.u8()?;
    let h = r.dim("height")?;
    let w = r.dim("width")?;
    let d = r.dim("dimension")?;
    let epsilon = r.f32()? as f64;
    let positions = h * w;
    let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    match kind {
        KIND_DIAG => {
            r.expect_payload(4 * (positions * 2 * d) as u64)?;
            let mut mean = Vec::with_capacity(positions * d);
            let mut var = Vec::with_capacity(positions * d);
            for _ in 0..positions {
                mean.extend(widen(r.f32s(d)?));
                var.extend(widen(r.f32s(d)?));
            }
            Ok(GaussianModelFile::Diag(DiagGaussianGrid::from_parts(
                h, w, d, epsilon, mean, var,
            )?))
        }
        KIND_FULL => {
            r.expect_payload(4 * (positions * (d + 2 * d * d)) as u64)?;
            let mut mean = Vec::with_capacity(positions * d);
            let mut cov = Vec::with_capacity(positions * d * d);
            let mut prec = Vec::with_capacity(positions * d * d);
            for _ in 0..positions {
                mean.extend(widen(r.f32s(d)?));
                cov.extend(widen(r.f32s(d * d)?));
                prec.extend(widen(r.f32s(d * d)?));
            }
            Ok(GaussianModelFile::Full(FullGaussianGrid::from_parts(
                h, w, d, epsilon, mean, cov, prec,
            )?))
        }
        other => Err(Error::format(path, format!("unknown model kind {other}"))),
    }
}

pub fn encode_bank(bank: &MemoryBank) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    header(&mut buf, BANK_MAGIC);
    put_u32(&mut buf, bank.len())?;
    put_u32(&mut buf, bank.dim())?;
    put_f32s(&mut buf, bank.as_slice().iter().copied());
    for p in bank.provenance() {
        for v in [p.image, p.row, p.col] {
            buf.write_u32::<LE>(v).unwrap();
        }
    }
    Ok(buf)
}

pub fn write_bank(bank: &MemoryBank, path: &Path) -> Result<u64> {
    write_file(path, &encode_bank(bank)?)
}

pub fn read_bank(path: &Path) -> Result<MemoryBank> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(path, &bytes, BANK_MAGIC, BANK_HEADER_BYTES)?;
    let k = r.dim("vector count")?;
    let d = r.dim("dimension")?;
    r.expect_payload(4 * (k * d) as u64 + 12 * k as u64)?;
    let data = r.f32s(k * d)?;
    let mut provenance = Vec::with_capacity(k);
    for _ in 0..k {
        provenance.push(Provenance {
            image: r.u32()?,
            row: r.u32()?,
            col: r.u32()?,
        });
    }
    Ok(MemoryBank::new(d, data, provenance)?)
}

pub fn encode_compressed(bank: &CompressedBank) -> Result<Vec<u8>> {
    let cb = bank.codebooks();
    let row = code_row_bytes(cb.subspaces(), cb.bits());
    let mut buf = Vec::with_capacity(
        COMPRESSED_HEADER_BYTES as usize + 4 * cb.as_slice().len() + row * bank.len(),
    );
    header(&mut buf, COMPRESSED_MAGIC);
    put_u32(&mut buf, bank.len())?;
    put_u32(&mut buf, bank.dim())?;
    put_u32(&mut buf, cb.subspaces())?;
    put_u32(&mut buf, cb.bits() as usize)?;
    put_f32s(&mut buf, cb.as_slice().iter().copied());
    let mut packed = vec![0u8; row];
    for i in 0..bank.len() {
        pack_code(bank.code(i), cb.bits(), &mut packed);
        buf.write_all(&packed).unwrap();
    }
    Ok(buf)
}

pub fn write_compressed(bank: &CompressedBank, path: &Path) -> Result<u64> {
    write_file(path, &encode_compressed(bank)?)
}

pub fn read_compressed(path: &Path) -> Result<CompressedBank> {
    let bytes = read_file(path)?;
    let mut r = Reader::open(path, &bytes, COMPRESSED_MAGIC, COMPRESSED_HEADER_BYTES)?;
    let k = r.dim("vector count")?;
    let d = r.dim("dimension")?;
    let m = r.dim("subspace count")?;
    let bits = r.u32()?;
    if bits > vadlite_core::pq::MAX_BITS {
        return Err(Error::format(path, format!("{bits} bits per subspace exceeds 16")));
    }
    if d % m != 0 {
        return Err(Error::format(path, "subspace count does not divide dimension"));
    }
    let v = 1usize << bits;
    let row = code_row_bytes(m, bits);
    r.expect_payload(4 * (v * d) as u64 + (row * k) as u64)?;
    let centroids = r.f32s(v * d)?;
    let codebooks = Codebooks::from_parts(m, d / m, bits, centroids)?;
    let packed = r.bytes(row * k)?;
    let mut codes = Vec::with_capacity(k * m);
    for chunk in packed.chunks_exact(row.max(1)).take(k) {
        unpack_code(chunk, m, bits, &mut codes);
    }
    // zero-width rows (b = 0) carry no bytes
    codes.resize(k * m, 0);
    Ok(CompressedBank::from_parts(codebooks, codes)?)
}

/// Writes a 16-bit binary PGM, scaling `values` (assumed in `[0, 1]`) to `0..=65535`.
pub fn write_pgm16(height: usize, width: usize, values: &[f32], path: &Path) -> Result<u64> {
    let mut buf = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let q = (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    write_file(path, &buf)
}

/// Binary PGM (`P5`, 8- or 16-bit) as `(height, width, samples)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = read_file(path)?;
    let (dims, pixels) = parse_pgm(path, &bytes)?;
    Ok((dims.0, dims.1, pixels))
}

/// Header of a PGM file without decoding the raster.
pub fn read_pgm_dims(path: &Path) -> Result<(usize, usize)> {
    let bytes = read_file(path)?;
    let (fields, _) = pgm_header(path, &bytes)?;
    Ok((fields[1], fields[0]))
}

/// Returns `[width, height, maxval]` and the raster offset.
fn pgm_header(path: &Path, bytes: &[u8]) -> Result<([usize; 3], usize)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(path, "not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed PGM header"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] == 0 || fields[1] == 0 || fields[2] == 0 || fields[2] > 65535 {
        return Err(Error::format(path, "invalid PGM dimensions or maxval"));
    }
    Ok((fields, pos))
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<((usize, usize), Vec<u16>)> {
    let ([width, height, maxval], offset) = pgm_header(path, bytes)?;
    let sample = if maxval < 256 { 1 } else { 2 };
    let expected = offset as u64 + (width * height * sample) as u64;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let raster = &bytes[offset..offset + width * height * sample];
    let pixels = if sample == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok(((height, width), pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let g = FeatureGrid::new(1, 1, 2, vec![1.0, -2.0]).unwrap();
        assert_eq!(write_feature_file(&g, &dir.path().join("a.vadf")).unwrap(), 28);
        let g = FeatureGrid::new(2, 2, 224, vec![0.5; 2 * 2 * 224]).unwrap();
        assert_eq!(write_feature_file(&g, &dir.path().join("b.vadf")).unwrap(), 3604);
        assert_eq!(feature_file_bytes(2, 2, 224), 3604);
    }

    #[test]
    fn feature_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.vadf");
        let g = FeatureGrid::new(2, 1, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        write_feature_file(&g, &path).unwrap();
        assert_eq!(read_feature_file(&path).unwrap(), g);

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_feature_file(&path), Err(Error::BadMagic { .. })));

        let mut bytes = encode_grid(2, 1, 3, g.as_slice()).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_feature_file(&path), Err(Error::Truncated { .. })));

        let mut bytes = encode_grid(2, 1, 3, g.as_slice()).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_feature_file(&path), Err(Error::Format { .. })));

        let mut bytes = encode_grid(2, 1, 3, g.as_slice()).unwrap();
        bytes[4] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_feature_file(&path), Err(Error::Version { version: 9, .. })));
    }

    #[test]
    fn header_sizes_match_constants() {
        let diag = DiagGaussianGrid::from_parts(1, 1, 2, 0.01, vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(encode_diag_model(&diag).unwrap().len() as u64, GAUSSIAN_HEADER_BYTES + 16);
        let bank = MemoryBank::from_vectors(2, vec![0.0; 6]).unwrap();
        assert_eq!(encode_bank(&bank).unwrap().len() as u64, BANK_HEADER_BYTES + 24 + 36);
        let cb = Codebooks::from_parts(1, 2, 1, vec![0.0; 4]).unwrap();
        let cbank = CompressedBank::from_parts(cb, vec![0, 1, 1]).unwrap();
        assert_eq!(encode_compressed(&cbank).unwrap().len() as u64, COMPRESSED_HEADER_BYTES + 16 + 3);
    }

    #[test]
    fn pgm_roundtrip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm16(2, 3, &[0.0, 0.5, 1.0, 1.0, 0.0, 0.25], &path).unwrap();
        let (h, w, px) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(px, vec![0, 32768, 65535, 65535, 0, 16384]);

        fs::write(&path, b"P5\n# mask\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(read_pgm(&path).unwrap(), (1, 2, vec![0, 255]));
        assert_eq!(read_pgm_dims(&path).unwrap(), (1, 2));
    }
}
