//! Minimal NIfTI-1 single-file (`.nii`, `.nii.gz`) reader and writer.
//!
//! Supported payload types: uint8, int16, int32 and float32. Files are always
//! written uncompressed and little-endian; gzip and big-endian input is
//! accepted on read.

use std::fs::File;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt};
use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Geometry, LabelVolume, Volume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const VOX_OFFSET: usize = 352;

/// NIfTI datatype codes handled by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
}

impl DataType {
    pub const ALL: [DataType; 4] = [DataType::U8, DataType::I16, DataType::I32, DataType::F32];

    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        Ok(match code {
            2 => DataType::U8,
            4 => DataType::I16,
            8 => DataType::I32,
            16 => DataType::F32,
            other => return Err(Error::Unsupported(format!("NIfTI datatype code {other}"))),
        })
    }

    pub fn bytes(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 => 2,
            DataType::I32 | DataType::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DataType::U8 => "uint8",
            DataType::I16 => "int16",
            DataType::I32 => "int32",
            DataType::F32 => "float32",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        DataType::ALL
            .into_iter()
            .find(|d| d.name() == name)
            .ok_or_else(|| Error::Unsupported(format!("datatype {name:?}")))
    }
}

/// Raw voxel payload in its on-disk type.
#[derive(Debug, Clone, PartialEq)]
pub enum NiftiData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl NiftiData {
    pub fn datatype(&self) -> DataType {
        match self {
            NiftiData::U8(_) => DataType::U8,
            NiftiData::I16(_) => DataType::I16,
            NiftiData::I32(_) => DataType::I32,
            NiftiData::F32(_) => DataType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NiftiData::U8(v) => v.len(),
            NiftiData::I16(v) => v.len(),
            NiftiData::I32(v) => v.len(),
            NiftiData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_f32(&self) -> Vec<f32> {
        match self {
            NiftiData::U8(v) => v.iter().map(|&x| x as f32).collect(),
            NiftiData::I16(v) => v.iter().map(|&x| x as f32).collect(),
            NiftiData::I32(v) => v.iter().map(|&x| x as f32).collect(),
            NiftiData::F32(v) => v.clone(),
        }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            NiftiData::U8(v) => out.extend_from_slice(v),
            NiftiData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

/// A decoded NIfTI-1 file: geometry, intensity scaling and the raw payload.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    pub geometry: Geometry,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub data: NiftiData,
}

impl NiftiImage {
    pub fn from_volume(vol: &Volume) -> Self {
        NiftiImage {
            geometry: *vol.geometry(),
            scl_slope: 0.0,
            scl_inter: 0.0,
            data: NiftiData::F32(vol.data().to_vec()),
        }
    }

    /// Label volumes are stored as int32.
    pub fn from_labels(labels: &LabelVolume) -> Result<Self> {
        let data = labels
            .data()
            .iter()
            .map(|&v| i32::try_from(v).map_err(|_| Error::arg(format!("label {v} exceeds int32"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(NiftiImage {
            geometry: *labels.geometry(),
            scl_slope: 0.0,
            scl_inter: 0.0,
            data: NiftiData::I32(data),
        })
    }

    /// Masks are stored as uint8 0/1.
    pub fn from_mask(mask: &BinaryMask, geometry: &Geometry) -> Result<Self> {
        if geometry.dims != mask.dims() {
            return Err(Error::arg("mask dims do not match geometry"));
        }
        Ok(NiftiImage {
            geometry: *geometry,
            scl_slope: 0.0,
            scl_inter: 0.0,
            data: NiftiData::U8(mask.data().iter().map(|&b| b as u8).collect()),
        })
    }

    pub fn datatype(&self) -> DataType {
        self.data.datatype()
    }

    pub fn is_integer(&self) -> bool {
        self.datatype() != DataType::F32
    }

    /// Scalar view, applying `scl_slope`/`scl_inter` when a slope is set.
    pub fn to_volume(&self) -> Result<Volume> {
        let mut data = self.data.to_f32();
        if self.scl_slope != 0.0 && (self.scl_slope != 1.0 || self.scl_inter != 0.0) {
            for v in &mut data {
                *v = *v * self.scl_slope + self.scl_inter;
            }
        }
        Volume::new(self.geometry, data)
    }

    /// Label view; requires an integer payload with nonnegative values.
    pub fn to_labels(&self) -> Result<LabelVolume> {
        let conv = |v: i64| {
            u32::try_from(v).map_err(|_| Error::arg(format!("negative label value {v}")))
        };
        let data = match &self.data {
            NiftiData::U8(v) => v.iter().map(|&x| x as u32).collect(),
            NiftiData::I16(v) => v.iter().map(|&x| conv(x as i64)).collect::<Result<_>>()?,
            NiftiData::I32(v) => v.iter().map(|&x| conv(x as i64)).collect::<Result<_>>()?,
            NiftiData::F32(v) => v
                .iter()
                .map(|&x| {
                    if x.fract() == 0.0 && x >= 0.0 && x <= u32::MAX as f32 {
                        Ok(x as u32)
                    } else {
                        Err(Error::arg(format!("non-integer label value {x}")))
                    }
                })
                .collect::<Result<_>>()?,
        };
        LabelVolume::new(self.geometry, data)
    }

    pub fn to_mask(&self) -> Result<BinaryMask> {
        let labels = self.to_labels()?;
        Ok(labels.foreground())
    }

    /// Serializes header and payload into a byte buffer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let dt = self.datatype();
        let mut out = Vec::with_capacity(VOX_OFFSET + self.data.len() * dt.bytes());
        out.resize(VOX_OFFSET, 0);
        let h = &mut out[..HEADER_SIZE];
        let g = &self.geometry;
        LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
        h[38] = b'r';
        let dim: [i16; 8] = [
            3,
            g.dims.0[0] as i16,
            g.dims.0[1] as i16,
            g.dims.0[2] as i16,
            1,
            1,
            1,
            1,
        ];
        for (i, d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * i..42 + 2 * i], *d);
        }
        LittleEndian::write_i16(&mut h[70..72], dt.code());
        LittleEndian::write_i16(&mut h[72..74], (dt.bytes() * 8) as i16);
        let pixdim: [f32; 8] = [
            1.0,
            g.spacing[0] as f32,
            g.spacing[1] as f32,
            g.spacing[2] as f32,
            1.0,
            1.0,
            1.0,
            1.0,
        ];
        for (i, p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut h[76 + 4 * i..80 + 4 * i], *p);
        }
        LittleEndian::write_f32(&mut h[108..112], VOX_OFFSET as f32);
        LittleEndian::write_f32(&mut h[112..116], self.scl_slope);
        LittleEndian::write_f32(&mut h[116..120], self.scl_inter);
        // xyzt_units: mm
        h[123] = 2;
        // qform: identity rotation, offsets carry the origin
        LittleEndian::write_i16(&mut h[252..254], 1);
        for a in 0..3 {
            LittleEndian::write_f32(&mut h[268 + 4 * a..272 + 4 * a], g.origin[a] as f32);
        }
        h[344..348].copy_from_slice(b"n+1\0");
        self.data.write_le(&mut out);
        out
    }

    /// Parses a single-file NIfTI-1 image (optionally gzip-compressed).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
            let mut raw = Vec::new();
            GzDecoder::new(bytes)
                .read_to_end(&mut raw)
                .map_err(|e| Error::Format(format!("gzip stream: {e}")))?;
            return Self::parse::<LittleEndian>(&raw).or_else(|e| match e {
                Error::Format(_) if is_big_endian(&raw) => Self::parse::<BigEndian>(&raw),
                e => Err(e),
            });
        }
        if is_big_endian(bytes) {
            Self::parse::<BigEndian>(bytes)
        } else {
            Self::parse::<LittleEndian>(bytes)
        }
    }

    fn parse<B: ByteOrder>(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
                bytes.len()
            )));
        }
        let h = &bytes[..HEADER_SIZE];
        if B::read_i32(&h[0..4]) != HEADER_SIZE as i32 {
            return Err(Error::Format("sizeof_hdr is not 348".into()));
        }
        if &h[344..347] != b"n+1" {
            return Err(Error::Format(
                "magic is not \"n+1\" (only single-file NIfTI-1 is supported)".into(),
            ));
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = B::read_i16(&h[40 + 2 * i..42 + 2 * i]);
        }
        if dim[0] != 3 && !(dim[0] > 3 && dim[4..=dim[0] as usize].iter().all(|&d| d == 1)) {
            return Err(Error::Dimensionality(dim[0]));
        }
        if dim[1..4].iter().any(|&d| d < 1) {
            return Err(Error::Format(format!("nonpositive dims {:?}", &dim[1..4])));
        }
        let dims = Dims::new(dim[1] as usize, dim[2] as usize, dim[3] as usize);
        let dt = DataType::from_code(B::read_i16(&h[70..72]))?;
        let mut spacing = [0.0f64; 3];
        for (a, s) in spacing.iter_mut().enumerate() {
            let p = B::read_f32(&h[80 + 4 * a..84 + 4 * a]).abs() as f64;
            *s = if p > 0.0 && p.is_finite() { p } else { 1.0 };
        }
        let qform = B::read_i16(&h[252..254]);
        let sform = B::read_i16(&h[254..256]);
        let mut origin = [0.0f64; 3];
        for (a, o) in origin.iter_mut().enumerate() {
            *o = if qform > 0 {
                B::read_f32(&h[268 + 4 * a..272 + 4 * a]) as f64
            } else if sform > 0 {
                B::read_f32(&h[280 + 16 * a + 12..280 + 16 * a + 16]) as f64
            } else {
                0.0
            };
        }
        let vox_offset = B::read_f32(&h[108..112]);
        let offset = if vox_offset >= VOX_OFFSET as f32 {
            vox_offset as usize
        } else {
            VOX_OFFSET
        };
        let n = dims.len();
        let need = offset + n * dt.bytes();
        if bytes.len() < need {
            return Err(Error::Format(format!(
                "payload truncated: expected {need} bytes, found {}",
                bytes.len()
            )));
        }
        let mut rdr = Cursor::new(&bytes[offset..need]);
        let short = |e: std::io::Error| Error::Format(format!("payload: {e}"));
        let data = match dt {
            DataType::U8 => NiftiData::U8(bytes[offset..need].to_vec()),
            DataType::I16 => {
                let mut v = vec![0i16; n];
                rdr.read_i16_into::<B>(&mut v).map_err(short)?;
                NiftiData::I16(v)
            }
            DataType::I32 => {
                let mut v = vec![0i32; n];
                rdr.read_i32_into::<B>(&mut v).map_err(short)?;
                NiftiData::I32(v)
            }
            DataType::F32 => {
                let mut v = vec![0f32; n];
                rdr.read_f32_into::<B>(&mut v).map_err(short)?;
                NiftiData::F32(v)
            }
        };
        let finite = |x: f32| if x.is_finite() { x } else { 0.0 };
        Ok(NiftiImage {
            geometry: Geometry::new(dims, spacing, origin)
                .map_err(|e| Error::Format(e.to_string()))?,
            scl_slope: finite(B::read_f32(&h[112..116])),
            scl_inter: finite(B::read_f32(&h[116..120])),
            data,
        })
    }
}

fn is_big_endian(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    NiftiImage::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write_nifti(image: &NiftiImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = image.to_bytes();
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read_nifti(path)?.to_volume()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read_nifti(path)?.to_labels()
}

pub fn write_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&NiftiImage::from_volume(vol), path)
}

pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&NiftiImage::from_labels(labels)?, path)
}

pub fn write_mask(mask: &BinaryMask, geometry: &Geometry, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&NiftiImage::from_mask(mask, geometry)?, path)
}

/// Byte-swapped copy of a little-endian file, for big-endian read tests.
#[cfg(test)]
fn to_big_endian(img: &NiftiImage) -> Vec<u8> {
    let le = img.to_bytes();
    let mut out = le.clone();
    let swap = |out: &mut Vec<u8>, at: usize, width: usize| out[at..at + width].reverse();
    swap(&mut out, 0, 4);
    for i in 0..8 {
        swap(&mut out, 40 + 2 * i, 2);
    }
    swap(&mut out, 70, 2);
    swap(&mut out, 72, 2);
    for i in 0..8 {
        swap(&mut out, 76 + 4 * i, 4);
    }
    for at in [108, 112, 116, 268, 272, 276] {
        swap(&mut out, at, 4);
    }
    swap(&mut out, 252, 2);
    let w = img.datatype().bytes();
    let mut at = VOX_OFFSET;
    while at < out.len() {
        swap(&mut out, at, w);
        at += w;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_volume() -> Volume {
        Volume::from_fn(Dims::new(2, 2, 2), |[x, y, z]| (x + 2 * y + 4 * z) as f32 * 0.5)
            .with_geometry([0.88, 0.88, 1.5], [10.0, -20.0, 5.5])
            .unwrap()
    }

    #[test]
    fn float_roundtrip_and_size() {
        let v = Volume::zeros(Dims::cube(2));
        let bytes = NiftiImage::from_volume(&v).to_bytes();
        assert_eq!(bytes.len(), VOX_OFFSET + 32);
        let back = NiftiImage::from_bytes(&bytes).unwrap().to_volume().unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn spacing_from_pixdim() {
        let v = sample_volume();
        let img = NiftiImage::from_bytes(&NiftiImage::from_volume(&v).to_bytes()).unwrap();
        let back = img.to_volume().unwrap();
        assert_eq!(back.spacing(), [0.88f32 as f64, 0.88f32 as f64, 1.5]);
        assert_eq!(back.origin(), [10.0, -20.0, 5.5]);
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn labels_written_as_int32() {
        let l = LabelVolume::from_fn(Dims::new(3, 2, 2), |[x, _, _]| if x == 1 { 10 } else { 0 });
        let img = NiftiImage::from_labels(&l).unwrap();
        assert_eq!(img.datatype(), DataType::I32);
        let back = NiftiImage::from_bytes(&img.to_bytes()).unwrap();
        assert_eq!(back.to_labels().unwrap(), l);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let bytes = NiftiImage::from_volume(&sample_volume()).to_bytes();
        let err = NiftiImage::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
        let err = NiftiImage::from_bytes(&bytes[..100]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn bad_magic_datatype_and_rank() {
        let mut bytes = NiftiImage::from_volume(&sample_volume()).to_bytes();
        let mut bad = bytes.clone();
        bad[344] = b'x';
        assert!(matches!(NiftiImage::from_bytes(&bad), Err(Error::Format(_))));

        let mut bad = bytes.clone();
        LittleEndian::write_i16(&mut bad[70..72], 64);
        assert!(matches!(NiftiImage::from_bytes(&bad), Err(Error::Unsupported(_))));

        LittleEndian::write_i16(&mut bytes[40..42], 2);
        assert!(matches!(
            NiftiImage::from_bytes(&bytes),
            Err(Error::Dimensionality(2))
        ));
    }

    #[test]
    fn gzip_input_accepted() {
        use flate2::write::GzEncoder;
        let v = sample_volume();
        let raw = NiftiImage::from_volume(&v).to_bytes();
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::fast());
        enc.write_all(&raw).unwrap();
        let gz = enc.finish().unwrap();
        let back = NiftiImage::from_bytes(&gz).unwrap().to_volume().unwrap();
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn big_endian_input_accepted() {
        let img = NiftiImage {
            geometry: *sample_volume().geometry(),
            scl_slope: 0.0,
            scl_inter: 0.0,
            data: NiftiData::I16(vec![-3, 7, 1000, -1000, 0, 1, 2, 3]),
        };
        let be = to_big_endian(&img);
        let back = NiftiImage::from_bytes(&be).unwrap();
        assert_eq!(back.data, img.data);
        assert_eq!(back.geometry.dims, img.geometry.dims);
    }

    #[test]
    fn scaling_applied_to_volume_view() {
        let mut img = NiftiImage::from_volume(&Volume::zeros(Dims::cube(1)));
        img.data = NiftiData::I16(vec![10]);
        img.scl_slope = 2.0;
        img.scl_inter = -1.0;
        let back = NiftiImage::from_bytes(&img.to_bytes()).unwrap();
        assert_eq!(back.to_volume().unwrap().data(), &[19.0]);
    }

    #[test]
    fn negative_values_rejected_as_labels() {
        let mut img = NiftiImage::from_volume(&Volume::zeros(Dims::cube(1)));
        img.data = NiftiData::I16(vec![-1]);
        assert!(img.to_labels().is_err());
    }

    #[test]
    fn unwritable_path_reports_path() {
        let err = write_volume(&sample_volume(), "/nonexistent-dir/x.nii").unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.nii"));
    }
}
