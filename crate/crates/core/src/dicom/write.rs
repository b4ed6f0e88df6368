use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{tags, DataSet, DicomError, Element, Result, SliceGeometry, TransferSyntax, Vr};

const MR_IMAGE_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.4";
const IMPLEMENTATION_CLASS: &str = "2.25.308716320436512377301546216412085061";

/// Serialize a dataset.
///
/// With `preamble`, emits 128 zero bytes, `DICM`, then the group 0002
/// elements in explicit VR (recomputing the group length if present) and the
/// remainder in the dataset's transfer syntax. Without it, every element is
/// written in the dataset's transfer syntax.
pub fn encode_dataset(ds: &DataSet, preamble: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let syntax = ds.transfer_syntax();
    if !preamble {
        for e in ds.iter() {
            encode_element(&mut out, e, syntax)?;
        }
        return Ok(out);
    }

    out.extend_from_slice(&[0u8; 128]);
    out.extend_from_slice(b"DICM");

    let meta = encode_meta(ds)?;
    if ds.contains(tags::FILE_META_GROUP_LENGTH) {
        let length = Element::u32(tags::FILE_META_GROUP_LENGTH, meta.len() as u32);
        encode_element(&mut out, &length, TransferSyntax::ExplicitVRLittleEndian)?;
    }
    out.extend_from_slice(&meta);

    for e in ds.non_meta() {
        encode_element(&mut out, e, syntax)?;
    }
    Ok(out)
}

/// Meta elements other than the group length, explicit VR.
fn encode_meta(ds: &DataSet) -> Result<Vec<u8>> {
    let mut meta = Vec::new();
    for e in ds.iter().filter(|e| e.tag.is_meta() && e.tag != tags::FILE_META_GROUP_LENGTH) {
        encode_element(&mut meta, e, TransferSyntax::ExplicitVRLittleEndian)?;
    }
    Ok(meta)
}

fn encode_element(out: &mut Vec<u8>, e: &Element, syntax: TransferSyntax) -> Result<()> {
    let mut raw = e.raw.as_slice();
    let padded;
    if raw.len() % 2 == 1 {
        padded = [raw, &[e.vr.pad_byte()]].concat();
        raw = &padded;
    }
    let length = u32::try_from(raw.len()).map_err(|_| DicomError::InvalidValue {
        tag: e.tag,
        reason: "value exceeds 4 GiB".into(),
    })?;

    out.extend_from_slice(&e.tag.group.to_le_bytes());
    out.extend_from_slice(&e.tag.element.to_le_bytes());
    match syntax {
        TransferSyntax::ImplicitVRLittleEndian => out.extend_from_slice(&length.to_le_bytes()),
        TransferSyntax::ExplicitVRLittleEndian => {
            out.extend_from_slice(e.vr.code().as_bytes());
            if e.vr.has_long_length() {
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&length.to_le_bytes());
            } else {
                let short = u16::try_from(length).map_err(|_| DicomError::InvalidValue {
                    tag: e.tag,
                    reason: format!("{} value of {length} bytes needs a long-form VR", e.vr),
                })?;
                out.extend_from_slice(&short.to_le_bytes());
            }
        }
    }
    out.extend_from_slice(raw);
    Ok(())
}

pub fn write_dataset(ds: &DataSet, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_dataset(ds, true)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Instance UID derived from the slice position and payload so that
/// regenerating a fixture is byte-identical.
fn instance_uid(geometry: &SliceGeometry, pixels: &Array2<u16>) -> String {
    // FNV-1a
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for v in geometry.position {
        feed(&v.to_bits().to_le_bytes());
    }
    for &p in pixels.iter() {
        feed(&p.to_le_bytes());
    }
    format!("2.25.{}", hash | 1)
}

/// Dataset for a single-frame 16-bit MR fixture slice, explicit VR little endian.
pub fn fixture_dataset(geometry: &SliceGeometry, pixels: &Array2<u16>) -> Result<DataSet> {
    geometry.validate()?;
    if pixels.dim() != (geometry.rows, geometry.cols) {
        return Err(DicomError::InvalidGeometry(format!(
            "pixel array {:?} does not match geometry {}x{}",
            pixels.dim(),
            geometry.rows,
            geometry.cols
        )));
    }
    let uid = instance_uid(geometry, pixels);
    let mut ds = DataSet::new(TransferSyntax::ExplicitVRLittleEndian);

    ds.insert(Element::new(tags::FILE_META_VERSION, Vr::OB, vec![0, 1]));
    ds.insert(Element::string(tags::MEDIA_STORAGE_SOP_CLASS_UID, Vr::UI, MR_IMAGE_STORAGE));
    ds.insert(Element::string(tags::MEDIA_STORAGE_SOP_INSTANCE_UID, Vr::UI, &uid));
    ds.insert(Element::string(
        tags::TRANSFER_SYNTAX_UID,
        Vr::UI,
        TransferSyntax::EXPLICIT_LE_UID,
    ));
    ds.insert(Element::string(tags::IMPLEMENTATION_CLASS_UID, Vr::UI, IMPLEMENTATION_CLASS));

    ds.insert(Element::string(tags::SOP_CLASS_UID, Vr::UI, MR_IMAGE_STORAGE));
    ds.insert(Element::string(tags::SOP_INSTANCE_UID, Vr::UI, &uid));
    ds.insert(Element::string(tags::MODALITY, Vr::CS, "MR"));
    ds.insert(Element::string(tags::PATIENT_NAME, Vr::PN, "FIXTURE^PHANTOM"));
    ds.insert(Element::string(tags::PATIENT_ID, Vr::LO, "PHYDCM-0001"));
    ds.insert(Element::decimals(tags::IMAGE_POSITION_PATIENT, &geometry.position));
    let orientation = [geometry.row_dir, geometry.col_dir].concat();
    ds.insert(Element::decimals(tags::IMAGE_ORIENTATION_PATIENT, &orientation));
    ds.insert(Element::u16(tags::SAMPLES_PER_PIXEL, 1));
    ds.insert(Element::string(tags::PHOTOMETRIC_INTERPRETATION, Vr::CS, "MONOCHROME2"));
    ds.insert(Element::u16(tags::ROWS, geometry.rows as u16));
    ds.insert(Element::u16(tags::COLUMNS, geometry.cols as u16));
    ds.insert(Element::decimals(tags::PIXEL_SPACING, &geometry.pixel_spacing));
    ds.insert(Element::u16(tags::BITS_ALLOCATED, 16));
    ds.insert(Element::u16(tags::BITS_STORED, 16));
    ds.insert(Element::u16(tags::HIGH_BIT, 15));
    ds.insert(Element::u16(tags::PIXEL_REPRESENTATION, 0));
    ds.insert(Element::decimals(tags::RESCALE_INTERCEPT, &[geometry.rescale_intercept]));
    ds.insert(Element::decimals(tags::RESCALE_SLOPE, &[geometry.rescale_slope]));

    let payload: Vec<u8> = pixels.iter().flat_map(|p| p.to_le_bytes()).collect();
    ds.insert(Element::new(tags::PIXEL_DATA, Vr::OW, payload));

    let meta_len = encode_meta(&ds)?.len() as u32;
    ds.insert(Element::u32(tags::FILE_META_GROUP_LENGTH, meta_len));
    Ok(ds)
}

/// Write a 16-bit fixture slice with a 128-byte preamble, `DICM` and explicit
/// VR little-endian encoding. Geometry is validated before anything is written.
pub fn write_fixture_dicom(
    geometry: &SliceGeometry,
    pixels: &Array2<u16>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let ds = fixture_dataset(geometry, pixels)?;
    write_dataset(&ds, path)
}
