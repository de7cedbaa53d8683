//! NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//!
//! Only the single-file form is accepted (magic "n+1\0"); .hdr/.img pairs
//! ("ni1\0") and NIfTI-2 are rejected. Supported datatypes: uint8, int16,
//! int32, float32, float64. The qform/sform orientation fields are parsed
//! and preserved verbatim but never interpreted; all geometry uses pixdim.
//! Gzip input is detected by its 0x1f8b magic; output compression is a flag.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, Spacing, VoxelGrid};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extender emitted on write.
pub const DATA_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

/// Voxel datatypes this implementation reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Datatype::Uint8),
            4 => Some(Datatype::Int16),
            8 => Some(Datatype::Int32),
            16 => Some(Datatype::Float32),
            64 => Some(Datatype::Float64),
            _ => None,
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn bitpix(self) -> i16 {
        match self {
            Datatype::Uint8 => 8,
            Datatype::Int16 => 16,
            Datatype::Int32 => 32,
            Datatype::Float32 => 32,
            Datatype::Float64 => 64,
        }
    }

    pub fn byte_size(self) -> usize {
        self.bitpix() as usize / 8
    }
}

/// Parsed NIfTI-1 header. Every field that can carry information survives a
/// parse/write cycle; legacy ANALYZE-7.5 leftovers are zeroed on write.
#[derive(Debug, Clone)]
pub struct NiftiHeader {
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p: [f32; 3],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub intent_name: [u8; 16],
    /// Detected byte order of the source stream. Transport metadata only:
    /// excluded from equality, and output is always little-endian.
    pub big_endian: bool,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            dim_info: 0,
            dim: [1, 1, 1, 1, 1, 1, 1, 1],
            intent_p: [0.0; 3],
            intent_code: 0,
            datatype: Datatype::Float32.code(),
            bitpix: Datatype::Float32.bitpix(),
            slice_start: 0,
            pixdim: [1.0; 8],
            vox_offset: DATA_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            xyzt_units: 0,
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow_x: [0.0; 4],
            srow_y: [0.0; 4],
            srow_z: [0.0; 4],
            intent_name: [0; 16],
            big_endian: false,
        }
    }
}

impl PartialEq for NiftiHeader {
    fn eq(&self, other: &Self) -> bool {
        // big_endian describes the source stream, not the image.
        self.dim_info == other.dim_info
            && self.dim == other.dim
            && self.intent_p == other.intent_p
            && self.intent_code == other.intent_code
            && self.datatype == other.datatype
            && self.bitpix == other.bitpix
            && self.slice_start == other.slice_start
            && self.pixdim == other.pixdim
            && self.vox_offset == other.vox_offset
            && self.scl_slope == other.scl_slope
            && self.scl_inter == other.scl_inter
            && self.slice_end == other.slice_end
            && self.slice_code == other.slice_code
            && self.xyzt_units == other.xyzt_units
            && self.cal_max == other.cal_max
            && self.cal_min == other.cal_min
            && self.slice_duration == other.slice_duration
            && self.toffset == other.toffset
            && self.descrip == other.descrip
            && self.aux_file == other.aux_file
            && self.qform_code == other.qform_code
            && self.sform_code == other.sform_code
            && self.quatern == other.quatern
            && self.qoffset == other.qoffset
            && self.srow_x == other.srow_x
            && self.srow_y == other.srow_y
            && self.srow_z == other.srow_z
            && self.intent_name == other.intent_name
    }
}

impl NiftiHeader {
    pub fn datatype(&self) -> Result<Datatype> {
        Datatype::from_code(self.datatype).ok_or(Error::UnsupportedDatatype(self.datatype))
    }

    /// Number of payload elements: product of dim[1..=dim[0]].
    pub fn element_count(&self) -> Result<usize> {
        let ndim = self.dim[0] as usize;
        let mut count = 1usize;
        for &d in &self.dim[1..=ndim] {
            count = count
                .checked_mul(d as usize)
                .ok_or_else(|| Error::BadHeader("volume element count overflows".into()))?;
        }
        Ok(count)
    }

    /// Effective slope: 0 is the NIfTI-1 convention for "no scaling".
    pub fn effective_slope(&self) -> f64 {
        if self.scl_slope == 0.0 {
            1.0
        } else {
            self.scl_slope as f64
        }
    }

    fn validate(&self) -> Result<()> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::BadHeader(format!("dim[0] = {ndim}, expected 1..=7")));
        }
        for i in 1..=ndim as usize {
            if self.dim[i] < 1 {
                return Err(Error::BadHeader(format!(
                    "dim[{i}] = {}, expected >= 1",
                    self.dim[i]
                )));
            }
        }
        let dt = self.datatype()?;
        if self.bitpix != dt.bitpix() {
            return Err(Error::BadHeader(format!(
                "bitpix {} inconsistent with datatype code {} (expected {})",
                self.bitpix,
                self.datatype,
                dt.bitpix()
            )));
        }
        if !self.vox_offset.is_finite() || (self.vox_offset as f64) < HEADER_SIZE as f64 {
            return Err(Error::BadHeader(format!(
                "vox_offset {} below the {HEADER_SIZE}-byte header",
                self.vox_offset
            )));
        }
        if !self.scl_slope.is_finite() || !self.scl_inter.is_finite() {
            return Err(Error::BadHeader("non-finite scl_slope/scl_inter".into()));
        }
        Ok(())
    }
}

/// A parsed NIfTI-1 image: header plus the payload decoded to f64 with
/// scl_slope/scl_inter applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiImage {
    pub header: NiftiHeader,
    pub payload: Vec<f64>,
}

impl NiftiImage {
    /// Wraps a scalar grid as a float32 image with identity scaling.
    pub fn from_voxel_grid(grid: &VoxelGrid) -> Self {
        let d = grid.dims();
        let s = grid.spacing();
        let header = NiftiHeader {
            dim: [3, d.nx as i16, d.ny as i16, d.nz as i16, 1, 1, 1, 1],
            datatype: Datatype::Float32.code(),
            bitpix: Datatype::Float32.bitpix(),
            pixdim: [1.0, s.dx as f32, s.dy as f32, s.dz as f32, 1.0, 1.0, 1.0, 1.0],
            ..NiftiHeader::default()
        };
        NiftiImage {
            header,
            payload: grid.data().to_vec(),
        }
    }

    /// Wraps a label volume as a uint8 image with identity scaling.
    pub fn from_label_volume(labels: &LabelVolume) -> Self {
        let d = labels.dims();
        let s = labels.spacing();
        let header = NiftiHeader {
            dim: [3, d.nx as i16, d.ny as i16, d.nz as i16, 1, 1, 1, 1],
            datatype: Datatype::Uint8.code(),
            bitpix: Datatype::Uint8.bitpix(),
            pixdim: [1.0, s.dx as f32, s.dy as f32, s.dz as f32, 1.0, 1.0, 1.0, 1.0],
            ..NiftiHeader::default()
        };
        NiftiImage {
            header,
            payload: labels.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn spatial(&self) -> Result<(Dims, Spacing)> {
        let ndim = self.header.dim[0] as usize;
        // Trailing non-spatial axes must be singletons for a 3D view.
        for i in 4..=ndim {
            if self.header.dim[i] != 1 {
                return Err(Error::BadHeader(format!(
                    "not a 3D volume: dim[{i}] = {}",
                    self.header.dim[i]
                )));
            }
        }
        let d = |i: usize| -> usize {
            if i <= ndim {
                self.header.dim[i].max(1) as usize
            } else {
                1
            }
        };
        let dims = Dims::new(d(1), d(2), d(3))?;
        let p = |i: usize| self.header.pixdim[i] as f64;
        let spacing = Spacing::new(p(1), p(2), p(3))
            .map_err(|_| Error::BadHeader(format!("nonpositive pixdim ({}, {}, {})", p(1), p(2), p(3))))?;
        Ok((dims, spacing))
    }

    pub fn to_voxel_grid(&self) -> Result<VoxelGrid> {
        let (dims, spacing) = self.spatial()?;
        VoxelGrid::new(dims, spacing, self.payload.clone())
    }

    pub fn to_label_volume(&self) -> Result<LabelVolume> {
        let (dims, spacing) = self.spatial()?;
        let mut data = Vec::with_capacity(self.payload.len());
        for &v in &self.payload {
            if v.fract() != 0.0 || !(0.0..=LabelVolume::MAX_LABEL as f64).contains(&v) {
                return Err(Error::InvalidLabel(if (0.0..=255.0).contains(&v) {
                    v as u8
                } else {
                    u8::MAX
                }));
            }
            data.push(v as u8);
        }
        LabelVolume::new(dims, spacing, data)
    }
}

#[inline]
fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

struct Reader<'a> {
    buf: &'a [u8],
    be: bool,
}

impl<'a> Reader<'a> {
    fn u8(&self, off: usize) -> u8 {
        self.buf[off]
    }
    fn i16(&self, off: usize) -> i16 {
        let b = [self.buf[off], self.buf[off + 1]];
        if self.be {
            i16::from_be_bytes(b)
        } else {
            i16::from_le_bytes(b)
        }
    }
    fn i32(&self, off: usize) -> i32 {
        let b: [u8; 4] = self.buf[off..off + 4].try_into().unwrap();
        if self.be {
            i32::from_be_bytes(b)
        } else {
            i32::from_le_bytes(b)
        }
    }
    fn f32(&self, off: usize) -> f32 {
        let b: [u8; 4] = self.buf[off..off + 4].try_into().unwrap();
        if self.be {
            f32::from_be_bytes(b)
        } else {
            f32::from_le_bytes(b)
        }
    }
    fn f64(&self, off: usize) -> f64 {
        let b: [u8; 8] = self.buf[off..off + 8].try_into().unwrap();
        if self.be {
            f64::from_be_bytes(b)
        } else {
            f64::from_le_bytes(b)
        }
    }
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        self.buf[off..off + N].try_into().unwrap()
    }
}

/// Parses a NIfTI-1 single-file stream (gzip detected automatically).
pub fn parse_nifti(bytes: &[u8]) -> Result<NiftiImage> {
    if is_gzip(bytes) {
        let mut decoded = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut decoded)
            .map_err(|e| Error::BadHeader(format!("gzip decode failed: {e}")))?;
        return parse_uncompressed(&decoded);
    }
    parse_uncompressed(bytes)
}

fn parse_uncompressed(bytes: &[u8]) -> Result<NiftiImage> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::BadHeader(format!(
            "stream of {} bytes is shorter than the {HEADER_SIZE}-byte header",
            bytes.len()
        )));
    }

    // sizeof_hdr doubles as the endianness probe.
    let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let big_endian = if le == HEADER_SIZE as i32 {
        false
    } else if be == HEADER_SIZE as i32 {
        true
    } else {
        return Err(Error::BadHeader(format!(
            "sizeof_hdr is {le} (LE) / {be} (BE), expected {HEADER_SIZE}"
        )));
    };

    if bytes[344..348] != MAGIC {
        return Err(Error::BadMagic);
    }

    let r = Reader {
        buf: bytes,
        be: big_endian,
    };

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = r.i16(40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = r.f32(76 + 4 * i);
    }

    let header = NiftiHeader {
        dim_info: r.u8(39),
        dim,
        intent_p: [r.f32(56), r.f32(60), r.f32(64)],
        intent_code: r.i16(68),
        datatype: r.i16(70),
        bitpix: r.i16(72),
        slice_start: r.i16(74),
        pixdim,
        vox_offset: r.f32(108),
        scl_slope: r.f32(112),
        scl_inter: r.f32(116),
        slice_end: r.i16(120),
        slice_code: r.u8(122),
        xyzt_units: r.u8(123),
        cal_max: r.f32(124),
        cal_min: r.f32(128),
        slice_duration: r.f32(132),
        toffset: r.f32(136),
        descrip: r.bytes::<80>(148),
        aux_file: r.bytes::<24>(228),
        qform_code: r.i16(252),
        sform_code: r.i16(254),
        quatern: [r.f32(256), r.f32(260), r.f32(264)],
        qoffset: [r.f32(268), r.f32(272), r.f32(276)],
        srow_x: [r.f32(280), r.f32(284), r.f32(288), r.f32(292)],
        srow_y: [r.f32(296), r.f32(300), r.f32(304), r.f32(308)],
        srow_z: [r.f32(312), r.f32(316), r.f32(320), r.f32(324)],
        intent_name: r.bytes::<16>(328),
        big_endian,
    };
    header.validate()?;

    let datatype = header.datatype()?;
    let count = header.element_count()?;
    let payload_bytes = count
        .checked_mul(datatype.byte_size())
        .ok_or_else(|| Error::BadHeader("payload byte count overflows".into()))?;

    // vox_offset skips any extension blocks; their contents are not read.
    let offset = header.vox_offset as f64;
    if offset.fract() != 0.0 {
        return Err(Error::BadHeader(format!("non-integer vox_offset {offset}")));
    }
    if offset > bytes.len() as f64 {
        return Err(Error::TruncatedPayload {
            expected: payload_bytes,
            got: bytes.len().saturating_sub(HEADER_SIZE),
        });
    }
    let offset = offset as usize;
    let avail = bytes.len() - offset;
    if avail < payload_bytes {
        return Err(Error::TruncatedPayload {
            expected: payload_bytes,
            got: avail,
        });
    }

    let slope = header.effective_slope();
    let inter = header.scl_inter as f64;
    let rp = Reader {
        buf: &bytes[offset..offset + payload_bytes],
        be: big_endian,
    };
    let mut payload = Vec::with_capacity(count);
    for i in 0..count {
        let raw = match datatype {
            Datatype::Uint8 => rp.u8(i) as f64,
            Datatype::Int16 => rp.i16(2 * i) as f64,
            Datatype::Int32 => rp.i32(4 * i) as f64,
            Datatype::Float32 => rp.f32(4 * i) as f64,
            Datatype::Float64 => rp.f64(8 * i),
        };
        payload.push(raw * slope + inter);
    }

    Ok(NiftiImage { header, payload })
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn put_u8(&mut self, off: usize, v: u8) {
        self.buf[off] = v;
    }
    fn put_i16(&mut self, off: usize, v: i16) {
        self.buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
    }
    fn put_i32(&mut self, off: usize, v: i32) {
        self.buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
    }
    fn put_f32(&mut self, off: usize, v: f32) {
        self.buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
    }
    fn put_bytes(&mut self, off: usize, v: &[u8]) {
        self.buf[off..off + v.len()].copy_from_slice(v);
    }
}

/// Serializes an image as an uncompressed little-endian NIfTI-1 stream:
/// 348-byte header, 4-byte extender, payload at the header's datatype
/// starting at byte 352.
///
/// Decoded values are re-encoded by inverting scl_slope/scl_inter, so the
/// write/parse cycle is exact under identity scaling (the form this writer's
/// own headers always use) and datatype-precision otherwise.
pub fn write_nifti(image: &NiftiImage) -> Result<Vec<u8>> {
    let h = &image.header;
    h.validate()?;
    let datatype = h.datatype()?;
    let count = h.element_count()?;
    if count != image.payload.len() {
        return Err(Error::DataLength {
            nx: h.dim[1].max(0) as usize,
            ny: h.dim[2].max(0) as usize,
            nz: h.dim[3].max(0) as usize,
            expected: count,
            got: image.payload.len(),
        });
    }

    let mut w = Writer {
        buf: vec![0u8; DATA_OFFSET + count * datatype.byte_size()],
    };

    w.put_i32(0, HEADER_SIZE as i32);
    w.put_u8(39, h.dim_info);
    for (i, &d) in h.dim.iter().enumerate() {
        w.put_i16(40 + 2 * i, d);
    }
    w.put_f32(56, h.intent_p[0]);
    w.put_f32(60, h.intent_p[1]);
    w.put_f32(64, h.intent_p[2]);
    w.put_i16(68, h.intent_code);
    w.put_i16(70, h.datatype);
    w.put_i16(72, h.bitpix);
    w.put_i16(74, h.slice_start);
    for (i, &p) in h.pixdim.iter().enumerate() {
        w.put_f32(76 + 4 * i, p);
    }
    w.put_f32(108, DATA_OFFSET as f32);
    w.put_f32(112, h.scl_slope);
    w.put_f32(116, h.scl_inter);
    w.put_i16(120, h.slice_end);
    w.put_u8(122, h.slice_code);
    w.put_u8(123, h.xyzt_units);
    w.put_f32(124, h.cal_max);
    w.put_f32(128, h.cal_min);
    w.put_f32(132, h.slice_duration);
    w.put_f32(136, h.toffset);
    w.put_bytes(148, &h.descrip);
    w.put_bytes(228, &h.aux_file);
    w.put_i16(252, h.qform_code);
    w.put_i16(254, h.sform_code);
    w.put_f32(256, h.quatern[0]);
    w.put_f32(260, h.quatern[1]);
    w.put_f32(264, h.quatern[2]);
    w.put_f32(268, h.qoffset[0]);
    w.put_f32(272, h.qoffset[1]);
    w.put_f32(276, h.qoffset[2]);
    for (i, &v) in h.srow_x.iter().enumerate() {
        w.put_f32(280 + 4 * i, v);
    }
    for (i, &v) in h.srow_y.iter().enumerate() {
        w.put_f32(296 + 4 * i, v);
    }
    for (i, &v) in h.srow_z.iter().enumerate() {
        w.put_f32(312 + 4 * i, v);
    }
    w.put_bytes(328, &h.intent_name);
    w.put_bytes(344, &MAGIC);
    // Bytes 348..352 stay zero: extender with no extensions.

    let slope = h.effective_slope();
    let inter = h.scl_inter as f64;
    for (i, &v) in image.payload.iter().enumerate() {
        let raw = (v - inter) / slope;
        let off = DATA_OFFSET + i * datatype.byte_size();
        match datatype {
            Datatype::Uint8 => w.put_u8(off, raw.round().clamp(0.0, u8::MAX as f64) as u8),
            Datatype::Int16 => w.put_i16(
                off,
                raw.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16,
            ),
            Datatype::Int32 => w.put_i32(
                off,
                raw.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32,
            ),
            Datatype::Float32 => w.put_f32(off, raw as f32),
            Datatype::Float64 => w.put_bytes(off, &raw.to_le_bytes()),
        }
    }

    Ok(w.buf)
}

/// Like [`write_nifti`] but gzip-compresses the stream.
pub fn write_nifti_gz(image: &NiftiImage) -> Result<Vec<u8>> {
    let raw = write_nifti(image)?;
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&raw)?;
    Ok(enc.finish()?)
}

/// Reads a .nii or .nii.gz file.
pub fn read_nifti_file(path: &Path) -> Result<NiftiImage> {
    let bytes = std::fs::read(path)?;
    parse_nifti(&bytes)
}

/// Writes a file, gzip-compressed when `gzip` is set. Callers usually derive
/// the flag from the .nii.gz extension.
pub fn write_nifti_file(path: &Path, image: &NiftiImage, gzip: bool) -> Result<()> {
    let bytes = if gzip {
        write_nifti_gz(image)?
    } else {
        write_nifti(image)?
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> VoxelGrid {
        let dims = Dims::new(4, 4, 4).unwrap();
        let spacing = Spacing::isotropic(1.0).unwrap();
        let data: Vec<f64> = (0..64).map(|i| (i as f32 * 0.25 - 3.0) as f64).collect();
        VoxelGrid::new(dims, spacing, data).unwrap()
    }

    #[test]
    fn golden_fixture_hex_layout() {
        // Generated by the writer, verified field-by-field at raw offsets.
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let bytes = write_nifti(&img).unwrap();

        assert_eq!(bytes.len(), DATA_OFFSET + 64 * 4);
        assert_eq!(i32::from_le_bytes(bytes[0..4].try_into().unwrap()), 348);
        assert_eq!(i16::from_le_bytes(bytes[40..42].try_into().unwrap()), 3); // dim[0]
        assert_eq!(i16::from_le_bytes(bytes[42..44].try_into().unwrap()), 4); // dim[1]
        assert_eq!(i16::from_le_bytes(bytes[70..72].try_into().unwrap()), 16); // float32
        assert_eq!(i16::from_le_bytes(bytes[72..74].try_into().unwrap()), 32); // bitpix
        let pixdim1 = f32::from_le_bytes(bytes[80..84].try_into().unwrap());
        assert_eq!(pixdim1, 1.0);
        let vox_offset = f32::from_le_bytes(bytes[108..112].try_into().unwrap());
        assert_eq!(vox_offset, 352.0);
        assert_eq!(&bytes[344..348], b"n+1\0");
        // First payload element at 352.
        let v0 = f32::from_le_bytes(bytes[352..356].try_into().unwrap());
        assert_eq!(v0, -3.0);

        let parsed = parse_nifti(&bytes).unwrap();
        let grid = parsed.to_voxel_grid().unwrap();
        assert_eq!(grid.dims(), Dims::new(4, 4, 4).unwrap());
        assert_eq!(grid.data(), sample_grid().data());
    }

    #[test]
    fn bad_magic_rejected() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let mut bytes = write_nifti(&img).unwrap();
        bytes[344..348].copy_from_slice(b"abcd");
        assert!(matches!(parse_nifti(&bytes), Err(Error::BadMagic)));
        // The .hdr/.img pair magic is also rejected.
        bytes[344..348].copy_from_slice(b"ni1\0");
        assert!(matches!(parse_nifti(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn bad_sizeof_hdr_rejected_under_both_endiannesses() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let mut bytes = write_nifti(&img).unwrap();
        bytes[0..4].copy_from_slice(&500i32.to_le_bytes());
        assert!(matches!(parse_nifti(&bytes), Err(Error::BadHeader(_))));
    }

    #[test]
    fn gzip_transparent() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let plain = parse_nifti(&write_nifti(&img).unwrap()).unwrap();
        let gz = parse_nifti(&write_nifti_gz(&img).unwrap()).unwrap();
        assert_eq!(plain, gz);
    }

    #[test]
    fn truncated_payload_detected() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let bytes = write_nifti(&img).unwrap();
        let cut = &bytes[..bytes.len() - 5];
        match parse_nifti(cut) {
            Err(Error::TruncatedPayload { expected, got }) => {
                assert_eq!(expected, 64 * 4);
                assert_eq!(got, 64 * 4 - 5);
            }
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_datatype_rejected() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let mut bytes = write_nifti(&img).unwrap();
        // 1536 = FLOAT128, not in the supported set.
        bytes[70..72].copy_from_slice(&1536i16.to_le_bytes());
        assert!(matches!(
            parse_nifti(&bytes),
            Err(Error::UnsupportedDatatype(1536))
        ));
    }

    #[test]
    fn label_volume_uint8_codes() {
        let dims = Dims::new(2, 2, 2).unwrap();
        let lv = LabelVolume::new(
            dims,
            Spacing::isotropic(1.0).unwrap(),
            vec![0, 1, 2, 3, 4, 0, 1, 2],
        )
        .unwrap();
        let img = NiftiImage::from_label_volume(&lv);
        assert_eq!(img.header.datatype, 2);
        assert_eq!(img.header.bitpix, 8);

        let bytes = write_nifti(&img).unwrap();
        let back = parse_nifti(&bytes).unwrap().to_label_volume().unwrap();
        assert_eq!(back, lv);
    }

    #[test]
    fn big_endian_twin_decodes_identically() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let le = write_nifti(&img).unwrap();

        // Build the big-endian twin by byte-swapping every field in place.
        let mut be = le.clone();
        let swap = |buf: &mut [u8], off: usize, n: usize| buf[off..off + n].reverse();
        swap(&mut be, 0, 4);
        for i in 0..8 {
            swap(&mut be, 40 + 2 * i, 2);
        }
        for off in [56, 60, 64] {
            swap(&mut be, off, 4);
        }
        for off in [68, 70, 72, 74] {
            swap(&mut be, off, 2);
        }
        for i in 0..8 {
            swap(&mut be, 76 + 4 * i, 4);
        }
        for off in [108, 112, 116] {
            swap(&mut be, off, 4);
        }
        swap(&mut be, 120, 2);
        for off in [124, 128, 132, 136] {
            swap(&mut be, off, 4);
        }
        for off in [252, 254] {
            swap(&mut be, off, 2);
        }
        for i in 0..18 {
            swap(&mut be, 256 + 4 * i, 4);
        }
        for i in 0..64 {
            swap(&mut be, 352 + 4 * i, 4);
        }

        let from_le = parse_nifti(&le).unwrap();
        let from_be = parse_nifti(&be).unwrap();
        assert!(!from_le.header.big_endian);
        assert!(from_be.header.big_endian);
        assert_eq!(from_le.payload, from_be.payload);
        assert_eq!(from_le.header.dim, from_be.header.dim);
        assert_eq!(from_le.header.pixdim, from_be.header.pixdim);
    }

    #[test]
    fn scl_slope_zero_treated_as_identity() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let mut bytes = write_nifti(&img).unwrap();
        bytes[112..116].copy_from_slice(&0.0f32.to_le_bytes());
        let parsed = parse_nifti(&bytes).unwrap();
        assert_eq!(parsed.payload, img.payload);
    }

    #[test]
    fn scaling_applied_on_decode() {
        let img = NiftiImage::from_voxel_grid(&sample_grid());
        let mut bytes = write_nifti(&img).unwrap();
        bytes[112..116].copy_from_slice(&2.0f32.to_le_bytes()); // scl_slope
        bytes[116..120].copy_from_slice(&10.0f32.to_le_bytes()); // scl_inter
        let parsed = parse_nifti(&bytes).unwrap();
        for (orig, scaled) in img.payload.iter().zip(&parsed.payload) {
            assert_eq!(*scaled, orig * 2.0 + 10.0);
        }
    }

    #[test]
    fn file_roundtrip_with_gz_extension() {
        let dir = std::env::temp_dir();
        let img = NiftiImage::from_voxel_grid(&sample_grid());

        let plain = dir.join("pedseg_core_rt.nii");
        write_nifti_file(&plain, &img, false).unwrap();
        assert_eq!(read_nifti_file(&plain).unwrap(), img);
        std::fs::remove_file(&plain).ok();

        let gz = dir.join("pedseg_core_rt.nii.gz");
        write_nifti_file(&gz, &img, true).unwrap();
        let raw = std::fs::read(&gz).unwrap();
        assert!(is_gzip(&raw));
        assert_eq!(read_nifti_file(&gz).unwrap(), img);
        std::fs::remove_file(&gz).ok();
    }
}
